#include "cimsim/quant.hpp"

#include "cimsim/error.hpp"

#include <algorithm>
#include <cmath>

namespace cimsim {

QuantParams calibrate_max(double max_abs, QuantScheme scheme, int bits, Signedness sign) {
    if (bits < 2 || bits > 16) throw DomainError("quantization bits must be in 2..16");
    if (!std::isfinite(max_abs) || max_abs < 0.0) throw DomainError("calibration range must be finite");
    QuantParams p{scheme, bits, 1.0, sign};
    if (max_abs == 0.0) return p;
    const double qmax = p.qmax();
    if (scheme == QuantScheme::UniformSymmetric) {
        p.scale = max_abs / qmax;
    } else {
        int fl = static_cast<int>(std::floor(std::log2(qmax / max_abs)));
        // log2 rounding can be off by one near powers of two; settle with exact ldexp checks
        while (max_abs > std::ldexp(qmax, -fl)) --fl;
        while (max_abs <= std::ldexp(qmax, -(fl + 1))) ++fl;
        p.scale = std::ldexp(1.0, -fl);
    }
    return p;
}

QuantParams calibrate(std::span<const float> values, QuantScheme scheme, int bits, Signedness sign) {
    if (values.empty()) throw DomainError("cannot calibrate an empty tensor");
    double max_abs = 0.0;
    for (float v : values) {
        if (!std::isfinite(v)) throw DomainError("cannot calibrate non-finite input");
        if (sign == Signedness::Unsigned && v < 0.0f) throw DomainError("unsigned calibration of negative input");
        max_abs = std::max(max_abs, static_cast<double>(std::fabs(v)));
    }
    return calibrate_max(max_abs, scheme, bits, sign);
}

std::int32_t quantize_value(double x, const QuantParams& p) {
    const double r = std::round(x / p.scale);
    return static_cast<std::int32_t>(std::clamp(r, static_cast<double>(p.qmin()), static_cast<double>(p.qmax())));
}

QuantizedTensor quantize(const Tensor& t, const QuantParams& p) {
    if (!(p.scale > 0.0)) throw DomainError("quantization scale must be positive");
    QuantizedTensor q{t.shape, std::vector<std::int32_t>(t.size()), p};
    for (std::size_t i = 0; i < t.size(); ++i) q.values[i] = quantize_value(t.data[i], p);
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t{q.shape, std::vector<float>(q.size())};
    for (std::size_t i = 0; i < q.size(); ++i)
        t.data[i] = static_cast<float>(static_cast<double>(q.values[i]) * q.params.scale);
    return t;
}

json to_json(const QuantParams& p) {
    return json{{"scheme", to_string(p.scheme)},
                {"bits", p.bits},
                {"scale", p.scale},
                {"signed", p.signedness == Signedness::Signed}};
}

QuantParams quant_params_from_json(const json& j) {
    try {
        QuantParams p;
        p.scheme = parse_quant_scheme(j.at("scheme").get<std::string>());
        p.bits = j.at("bits").get<int>();
        p.scale = j.at("scale").get<double>();
        p.signedness = j.value("signed", true) ? Signedness::Signed : Signedness::Unsigned;
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("quantization params: ") + e.what());
    }
}

}  // namespace cimsim
