#include "cimsim/analog.hpp"

#include "cimsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace cimsim {

double cell_offset(const DeviceModel& dev, int k) {
    if (std::isinf(dev.on_off_ratio)) return 0.0;
    return static_cast<double>((1 << k) - 1) / (dev.on_off_ratio - 1.0);
}

double digit_to_cell(int digit, const DeviceModel& dev, int k, Rng& rng) {
    if (k < 1 || k > dev.cell_bits_max)
        throw DomainError("cell precision " + std::to_string(k) + " unsupported by device " + dev.name);
    if (digit < 0 || digit > (1 << k) - 1) throw DomainError("digit " + std::to_string(digit) + " out of range");
    double g = digit + cell_offset(dev, k);
    if (dev.sigma_cell > 0.0) g += dev.sigma_cell * rng.normal();
    return std::max(g, 0.0);
}

std::vector<CellArray> program_array(const DigitPlanes& planes, const DeviceModel& dev, Rng& rng) {
    const int k = planes.cell_bits;
    if (k < 1 || k > dev.cell_bits_max)
        throw DomainError("cell precision " + std::to_string(k) + " unsupported by device " + dev.name);
    const double offset = cell_offset(dev, k);
    std::vector<CellArray> out;
    out.reserve(planes.planes.size());
    for (const auto& plane : planes.planes) {
        CellArray cells{plane.rows, plane.cols, std::vector<double>(plane.digits.size()), offset};
        for (std::size_t e = 0; e < plane.digits.size(); ++e) {
            double x = plane.digits[e];
            if (dev.sigma_cell > 0.0) x += dev.sigma_cell * rng.normal();
            cells.excess[e] = std::max(x, -offset);
        }
        out.push_back(std::move(cells));
    }
    return out;
}

void check_adc_spec(const AdcSpec& spec) {
    if (spec.centers.size() != spec.refs.size() + 1) throw DomainError("ADC spec needs one more center than refs");
    for (std::size_t i = 1; i < spec.refs.size(); ++i)
        if (!(spec.refs[i] > spec.refs[i - 1])) throw DomainError("ADC refs must be strictly increasing");
    for (std::size_t i = 1; i < spec.centers.size(); ++i)
        if (spec.centers[i] < spec.centers[i - 1]) throw DomainError("ADC centers must be nondecreasing");
}

AdcSpec build_linear_adc(int p, double lo, double hi) {
    if (p < 1 || p > 24) throw DomainError("ADC precision out of range");
    if (!(hi > lo)) throw DomainError("ADC full-scale range is empty");
    const std::size_t levels = std::size_t{1} << p;
    AdcSpec spec;
    spec.centers.resize(levels);
    for (std::size_t i = 0; i < levels; ++i)
        spec.centers[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(levels - 1);
    for (std::size_t i = 1; i < levels; ++i) spec.refs.push_back(0.5 * (spec.centers[i - 1] + spec.centers[i]));
    return spec;
}

AdcSpec calibrate_nonlinear_adc(std::span<const double> samples, int p) {
    if (p < 1 || p > 24) throw DomainError("ADC precision out of range");
    const std::size_t levels = std::size_t{1} << p;
    if (samples.size() < levels) throw DomainError("insufficient samples to calibrate a nonlinear ADC");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();

    AdcSpec spec;
    spec.refs.resize(levels - 1);
    for (std::size_t i = 1; i < levels; ++i) {
        double r = s[i * n / levels];
        if (i > 1 && !(r > spec.refs[i - 2])) r = std::nextafter(spec.refs[i - 2], std::numeric_limits<double>::infinity());
        spec.refs[i - 1] = r;
    }

    std::vector<double> centers(levels);
    std::vector<bool> filled(levels, false);
    std::size_t begin = 0;
    for (std::size_t i = 0; i < levels; ++i) {
        const std::size_t end = i + 1 < levels
                                    ? static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), spec.refs[i]) - s.begin())
                                    : n;
        if (end > begin) {
            const std::size_t m = end - begin;
            centers[i] = m % 2 ? s[begin + m / 2] : 0.5 * (s[begin + m / 2 - 1] + s[begin + m / 2]);
            filled[i] = true;
        }
        begin = std::max(begin, end);
    }
    // empty buckets borrow the nearest lower center, or the first nonempty one at the bottom
    const auto first = static_cast<std::size_t>(std::find(filled.begin(), filled.end(), true) - filled.begin());
    for (std::size_t i = 0; i < levels; ++i)
        if (!filled[i]) centers[i] = i < first ? centers[first] : centers[i - 1];
    spec.centers = std::move(centers);
    return spec;
}

AdcSpec fit_adc(std::span<const double> samples, int p) {
    if (p < 1 || p > 24) throw DomainError("ADC precision out of range");
    if (samples.empty()) throw DomainError("cannot fit an ADC without samples");
    const std::size_t levels = std::size_t{1} << p;
    std::vector<double> u(samples.begin(), samples.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (u.size() > levels) return calibrate_nonlinear_adc(samples, p);

    AdcSpec spec;
    spec.centers = u;
    for (std::size_t i = 1; i < u.size(); ++i) {
        double mid = 0.5 * (u[i - 1] + u[i]);
        if (!(mid > u[i - 1])) mid = u[i];
        spec.refs.push_back(mid);
    }
    const double top = u.back();
    const double step = std::max(1.0, std::fabs(top));
    for (std::size_t i = 1; spec.centers.size() < levels; ++i) {
        spec.refs.push_back(top + step * static_cast<double>(i));
        spec.centers.push_back(top);
    }
    return spec;
}

json to_json(const AdcSpec& spec) { return json{{"refs", spec.refs}, {"centers", spec.centers}}; }

AdcSpec adc_spec_from_json(const json& j) {
    AdcSpec spec;
    try {
        spec.refs = j.at("refs").get<std::vector<double>>();
        spec.centers = j.at("centers").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("ADC spec: ") + e.what());
    }
    check_adc_spec(spec);
    return spec;
}

AdcSpec load_adc_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open ADC spec " + path.string());
    try {
        return adc_spec_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("ADC spec: ") + e.what());
    }
}

}  // namespace cimsim
