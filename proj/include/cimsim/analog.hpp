#pragma once

#include "cimsim/config.hpp"
#include "cimsim/digitmap.hpp"
#include "cimsim/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <span>
#include <vector>

namespace cimsim {

/// G_min / dG for k-bit cells: (2^k - 1) / (r - 1), exactly zero for an infinite ratio.
double cell_offset(const DeviceModel& dev, int cell_bits);

/// Normalized conductance d + G_min/dG + noise, clamped at zero.
/// Draws from `rng` only when the device has nonzero variation.
double digit_to_cell(int digit, const DeviceModel& dev, int cell_bits, Rng& rng);

/// Normalized conductances of one programmed digit plane. The constant offset is kept
/// apart from the per-cell part so column sums can carry it as a single a * offset term.
struct CellArray {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> excess;  ///< conductance above `offset`, row-major
    double offset = 0.0;         ///< per-cell G_min/dG of this array

    double g(std::size_t r, std::size_t c) const { return excess[r * cols + c] + offset; }
    const double* excess_row(std::size_t r) const { return excess.data() + r * cols; }
};

/// One CellArray per plane, noise drawn plane by plane in row-major order.
std::vector<CellArray> program_array(const DigitPlanes& planes, const DeviceModel& dev, Rng& rng);

/// Piecewise conversion: centers[i] for refs[i-1] <= x < refs[i], clamped at both ends.
struct AdcSpec {
    std::vector<double> refs;     ///< strictly increasing, 2^p - 1 entries
    std::vector<double> centers;  ///< nondecreasing, 2^p entries
    bool operator==(const AdcSpec&) const = default;
};

void check_adc_spec(const AdcSpec& spec);

AdcSpec build_linear_adc(int precision, double lo, double hi);
/// Refs at the i/2^p sample quantiles, centers at the median of each bucket.
AdcSpec calibrate_nonlinear_adc(std::span<const double> samples, int precision);
/// Lossless spec when the samples take at most 2^p distinct values, quantile spec otherwise.
AdcSpec fit_adc(std::span<const double> samples, int precision);

inline double adc_convert(double x, const AdcSpec& spec) {
    const auto it = std::upper_bound(spec.refs.begin(), spec.refs.end(), x);
    return spec.centers[static_cast<std::size_t>(it - spec.refs.begin())];
}

json to_json(const AdcSpec& spec);
AdcSpec adc_spec_from_json(const json& j);
AdcSpec load_adc_spec(const std::filesystem::path& path);

}  // namespace cimsim
