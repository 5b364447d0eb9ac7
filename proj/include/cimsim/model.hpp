#pragma once

#include "cimsim/config.hpp"
#include "cimsim/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cimsim {

enum class LayerKind { Conv2d, Linear, Attention };
enum class Activation { None, Relu };

std::string to_string(LayerKind);
std::string to_string(Activation);

struct LayerDesc {
    std::string name;
    LayerKind kind = LayerKind::Linear;
    Activation activation = Activation::None;
    // conv2d
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    // linear (input is flattened)
    std::size_t in_features = 0;
    std::size_t out_features = 0;
    // attention-block, input [seq, d_model]
    std::size_t heads = 1;
    std::size_t d_model = 0;
    std::size_t d_ff = 0;

    bool operator==(const LayerDesc&) const = default;
};

/// Parameter tensors a layer expects, with their shapes. Conv weights are [cout, cin, kh, kw],
/// linear weights [in, out], attention projections [d, d] / [d, d_ff] / [d_ff, d].
std::vector<std::pair<std::string, std::vector<std::size_t>>> layer_parameters(const LayerDesc& layer);

struct NetworkDesc {
    std::string name;
    std::vector<std::size_t> input_shape;  ///< one sample: [C, H, W] or [seq, d]
    std::vector<LayerDesc> layers;
    bool operator==(const NetworkDesc&) const = default;
};

json to_json(const NetworkDesc& desc);
/// Throws FormatError on unknown layer kinds or missing fields.
NetworkDesc network_desc_from_json(const json& j);

/// Built-in desk-scale architectures: "tiny-cnn" and "tiny-attention".
NetworkDesc builtin_arch(const std::string& name);
std::vector<std::string> builtin_arch_names();

struct ModelBundle {
    NetworkDesc desc;
    std::map<std::string, Tensor> weights;  ///< keyed "<layer>.<param>"
    Tensor inputs;                          ///< [samples, ...input_shape]
    IntTensor labels;                       ///< [samples], teacher argmax

    std::size_t samples() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

struct SynthOptions {
    std::size_t samples = 256;
};

/// Weights ~ N(0, 1/sqrt(fan_in)), inputs ~ N(0, 1), labels from the full-precision forward
/// pass. Biases are zero except the last layer's, which centers each logit over the inputs.
/// Depends only on (seed, arch, options).
ModelBundle synth_model(std::uint64_t seed, const NetworkDesc& arch, const SynthOptions& opts = {});

/// Directory layout: network.json, weights/<layer>.<param>.npy, inputs.npy, labels.npy.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace cimsim
