#pragma once

#include "cimsim/config.hpp"
#include "cimsim/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cimsim {

enum class Signedness { Signed, Unsigned };

/// Per-tensor quantization parameters.
/// Signed range is symmetric, [-(2^(N-1)-1), 2^(N-1)-1]; unsigned range is [0, 2^N-1].
struct QuantParams {
    QuantScheme scheme = QuantScheme::UniformSymmetric;
    int bits = 8;
    double scale = 1.0;
    Signedness signedness = Signedness::Signed;

    std::int32_t qmax() const noexcept {
        return signedness == Signedness::Signed ? (1 << (bits - 1)) - 1 : (1 << bits) - 1;
    }
    std::int32_t qmin() const noexcept { return signedness == Signedness::Signed ? -qmax() : 0; }
    bool operator==(const QuantParams&) const = default;
};

struct QuantizedTensor {
    std::vector<std::size_t> shape;
    std::vector<std::int32_t> values;
    QuantParams params;

    std::size_t size() const noexcept { return values.size(); }
    std::int32_t at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
    bool operator==(const QuantizedTensor&) const = default;
};

/// Scale from the largest magnitude. uniform-symmetric: max/qmax; dynamic-fixed-point:
/// 2^-FL with FL the largest integer keeping max <= qmax * 2^-FL. All-zero input gives 1.
QuantParams calibrate_max(double max_abs, QuantScheme scheme, int bits, Signedness sign = Signedness::Signed);
QuantParams calibrate(std::span<const float> values, QuantScheme scheme, int bits,
                      Signedness sign = Signedness::Signed);
inline QuantParams calibrate(const Tensor& t, QuantScheme scheme, int bits, Signedness sign = Signedness::Signed) {
    return calibrate(std::span<const float>(t.data), scheme, bits, sign);
}

/// Round half away from zero, then saturate to the representable range.
std::int32_t quantize_value(double x, const QuantParams& p);
QuantizedTensor quantize(const Tensor& t, const QuantParams& p);
Tensor dequantize(const QuantizedTensor& q);

json to_json(const QuantParams& p);
QuantParams quant_params_from_json(const json& j);

}  // namespace cimsim
