#pragma once

#include <cmath>

namespace cimsim {

/// Neumaier-compensated running sum; merging partial sums in a fixed order keeps results reproducible.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double t = sum + x;
        carry += std::fabs(sum) >= std::fabs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    void merge(const CompensatedSum& o) {
        add(o.sum);
        add(o.carry);
    }
    double value() const { return sum + carry; }
};

}  // namespace cimsim
