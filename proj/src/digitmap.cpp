#include "cimsim/digitmap.hpp"

#include "cimsim/error.hpp"

#include <algorithm>

namespace cimsim {
namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

void check_cell_bits(int n, int k) {
    if (k < 1 || k > n || k > 8) throw DomainError("cell precision k=" + std::to_string(k) + " out of range for N=" +
                                                    std::to_string(n));
}

DigitPlane make_plane(std::size_t rows, std::size_t cols, std::int64_t weight, int group, Polarity pol,
                      bool dummy = false) {
    return DigitPlane{rows, cols, std::vector<std::uint8_t>(rows * cols, 0), weight, group, pol, dummy};
}

}  // namespace

int columns_per_weight(Design design, int n, int k) {
    switch (design) {
        case Design::Design1: return 1 + ceil_div(n - 1, k);
        case Design::Design2:
        case Design::Design3: return ceil_div(n, k);
    }
    return 0;
}

int extra_columns(Design design) { return design == Design::Design3 ? 1 : 0; }

int data_plane_count(Design design, int n, int k) {
    return design == Design::Design2 ? 2 * ceil_div(n, k) : columns_per_weight(design, n, k);
}

int adc_group_count(Design design, int n, int k) { return columns_per_weight(design, n, k); }

std::size_t DigitPlanes::data_plane_count() const {
    std::size_t n = 0;
    for (const auto& p : planes) n += p.dummy ? 0 : 1;
    return n;
}

DigitPlanes decompose_weights(const QuantizedTensor& q, Design design, int k, std::size_t dummy_columns) {
    if (q.shape.size() != 2) throw ShapeError("weights must be a matrix");
    const int n = q.params.bits;
    check_cell_bits(n, k);
    const std::int32_t limit = (1 << (n - 1)) - 1;
    const std::size_t rows = q.shape[0], cols = q.shape[1];
    const std::int64_t base = std::int64_t{1} << k;
    const std::uint32_t digit_mask = static_cast<std::uint32_t>(base - 1);

    DigitPlanes out{design, n, k, rows, cols, {}};
    auto spread = [&](std::uint32_t magnitude, std::size_t first_plane, int count, std::size_t e) {
        for (int j = 0; j < count; ++j)
            out.planes[first_plane + j].digits[e] = static_cast<std::uint8_t>((magnitude >> (j * k)) & digit_mask);
    };

    switch (design) {
        case Design::Design1: {
            const int digits = ceil_div(n - 1, k);
            for (int j = 0; j < digits; ++j)
                out.planes.push_back(make_plane(rows, cols, std::int64_t{1} << (j * k), j, Polarity::None));
            out.planes.push_back(make_plane(rows, cols, -(std::int64_t{1} << (n - 1)), digits, Polarity::None));
            const std::uint32_t low_mask = (1u << (n - 1)) - 1;
            for (std::size_t e = 0; e < q.size(); ++e) {
                const std::int32_t w = q.values[e];
                if (w < -limit || w > limit) throw DomainError("weight " + std::to_string(w) + " outside symmetric range");
                const auto twos = static_cast<std::uint32_t>(w) & ((1u << n) - 1);
                spread(twos & low_mask, 0, digits, e);
                out.planes[digits].digits[e] = static_cast<std::uint8_t>(twos >> (n - 1));
            }
            break;
        }
        case Design::Design2: {
            const int digits = ceil_div(n, k);
            for (int j = 0; j < digits; ++j)
                out.planes.push_back(make_plane(rows, cols, std::int64_t{1} << (j * k), j, Polarity::Positive));
            for (int j = 0; j < digits; ++j)
                out.planes.push_back(make_plane(rows, cols, -(std::int64_t{1} << (j * k)), j, Polarity::Negative));
            for (std::size_t e = 0; e < q.size(); ++e) {
                const std::int32_t w = q.values[e];
                if (w < -limit || w > limit) throw DomainError("weight " + std::to_string(w) + " outside symmetric range");
                if (w > 0) spread(static_cast<std::uint32_t>(w), 0, digits, e);
                if (w < 0) spread(static_cast<std::uint32_t>(-w), static_cast<std::size_t>(digits), digits, e);
            }
            break;
        }
        case Design::Design3: {
            const int digits = ceil_div(n, k);
            for (int j = 0; j < digits; ++j)
                out.planes.push_back(make_plane(rows, cols, std::int64_t{1} << (j * k), j, Polarity::None));
            const std::int32_t shift = 1 << (n - 1);
            for (std::size_t e = 0; e < q.size(); ++e) {
                const std::int32_t w = q.values[e];
                if (w < -limit || w > limit) throw DomainError("weight " + std::to_string(w) + " outside symmetric range");
                spread(static_cast<std::uint32_t>(w + shift), 0, digits, e);
            }
            // 2^(N-1) has a single nonzero base-2^k digit.
            const int dummy_group = (n - 1) / k;
            auto dummy = make_plane(rows, dummy_columns, -(std::int64_t{1} << (dummy_group * k)), dummy_group,
                                    Polarity::None, true);
            std::fill(dummy.digits.begin(), dummy.digits.end(), static_cast<std::uint8_t>(1u << ((n - 1) % k)));
            out.planes.push_back(std::move(dummy));
            break;
        }
    }
    return out;
}

std::vector<std::int64_t> cycle_weights(int m, InputSignMode mode) {
    std::vector<std::int64_t> w(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) w[t] = std::int64_t{1} << t;
    if (mode == InputSignMode::TwosComplementBitSerial) w[m - 1] = -w[m - 1];
    return w;
}

BitPlanes decompose_inputs(const QuantizedTensor& q, int m, InputSignMode mode) {
    if (m < 1 || m > 16) throw DomainError("input bits out of range");
    const bool twos = mode == InputSignMode::TwosComplementBitSerial;
    const std::int64_t lo = twos ? -(std::int64_t{1} << (m - 1)) : 0;
    const std::int64_t hi = twos ? (std::int64_t{1} << (m - 1)) - 1 : (std::int64_t{1} << m) - 1;
    BitPlanes out;
    out.rows = q.shape.empty() ? 0 : q.shape[0];
    out.cols = q.shape.size() > 1 ? q.shape[1] : 1;
    const auto weights = cycle_weights(m, mode);
    for (int t = 0; t < m; ++t) out.planes.push_back(BitPlane{std::vector<std::uint8_t>(q.size()), weights[t]});
    const std::uint32_t mask = (m == 32) ? ~0u : ((1u << m) - 1);
    for (std::size_t e = 0; e < q.size(); ++e) {
        const std::int32_t x = q.values[e];
        if (x < lo || x > hi) {
            throw DomainError(x < 0 && !twos ? "negative input in unsigned bit-serial mode"
                                             : "input " + std::to_string(x) + " outside bit-serial range");
        }
        const std::uint32_t bits = static_cast<std::uint32_t>(x) & mask;
        for (int t = 0; t < m; ++t) out.planes[t].bits[e] = static_cast<std::uint8_t>((bits >> t) & 1u);
    }
    return out;
}

template <class T>
std::vector<T> assemble(const PartialSums<T>& partials, std::span<const std::int64_t> cw,
                        std::span<const std::int64_t> pw) {
    if (cw.size() != partials.cycles || pw.size() != partials.planes)
        throw ShapeError("partial sums do not match the plane and cycle metadata");
    std::vector<T> y(partials.size, T{});
    for (std::size_t t = 0; t < partials.cycles; ++t)
        for (std::size_t j = 0; j < partials.planes; ++j) {
            const T w = static_cast<T>(cw[t] * pw[j]);
            for (std::size_t e = 0; e < partials.size; ++e) y[e] += w * partials.at(t, j, e);
        }
    return y;
}

template std::vector<std::int64_t> assemble(const PartialSums<std::int64_t>&, std::span<const std::int64_t>,
                                            std::span<const std::int64_t>);
template std::vector<double> assemble(const PartialSums<double>&, std::span<const std::int64_t>,
                                      std::span<const std::int64_t>);

std::vector<std::int64_t> plane_weights(const DigitPlanes& planes) {
    std::vector<std::int64_t> w;
    for (const auto& p : planes.planes) w.push_back(p.weight);
    return w;
}

}  // namespace cimsim
