#include "cimsim/model.hpp"

#include "cimsim/error.hpp"
#include "cimsim/netgraph.hpp"
#include "cimsim/rng.hpp"

#include <cmath>
#include <fstream>

namespace cimsim {
namespace {

std::string weight_file(const std::string& key) { return "weights/" + key + ".npy"; }

template <class T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(where + ": field '" + key + "' has the wrong type");
    }
}

template <class T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
    return j.contains(key) ? field<T>(j, key, where) : fallback;
}

}  // namespace

std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Linear: return "linear";
        case LayerKind::Attention: return "attention-block";
    }
    return "?";
}

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

std::vector<std::pair<std::string, std::vector<std::size_t>>> layer_parameters(const LayerDesc& l) {
    switch (l.kind) {
        case LayerKind::Conv2d:
            return {{"weight", {l.out_channels, l.in_channels, l.kernel, l.kernel}}, {"bias", {l.out_channels}}};
        case LayerKind::Linear:
            return {{"weight", {l.in_features, l.out_features}}, {"bias", {l.out_features}}};
        case LayerKind::Attention:
            return {{"wq", {l.d_model, l.d_model}}, {"wk", {l.d_model, l.d_model}}, {"wv", {l.d_model, l.d_model}},
                    {"wo", {l.d_model, l.d_model}}, {"w1", {l.d_model, l.d_ff}},     {"w2", {l.d_ff, l.d_model}}};
    }
    return {};
}

json to_json(const NetworkDesc& desc) {
    json layers = json::array();
    for (const auto& l : desc.layers) {
        json j{{"name", l.name}, {"kind", to_string(l.kind)}};
        switch (l.kind) {
            case LayerKind::Conv2d:
                j["in_channels"] = l.in_channels;
                j["out_channels"] = l.out_channels;
                j["kernel"] = l.kernel;
                j["stride"] = l.stride;
                j["padding"] = l.padding;
                j["activation"] = to_string(l.activation);
                break;
            case LayerKind::Linear:
                j["in_features"] = l.in_features;
                j["out_features"] = l.out_features;
                j["activation"] = to_string(l.activation);
                break;
            case LayerKind::Attention:
                j["heads"] = l.heads;
                j["d_model"] = l.d_model;
                j["d_ff"] = l.d_ff;
                break;
        }
        json refs = json::object();
        for (const auto& [param, shape] : layer_parameters(l)) refs[param] = weight_file(l.name + "." + param);
        j["weights"] = refs;
        layers.push_back(j);
    }
    return json{{"name", desc.name}, {"input_shape", desc.input_shape}, {"layers", layers}};
}

NetworkDesc network_desc_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("network description must be an object");
    NetworkDesc d;
    d.name = field_or<std::string>(j, "name", "network", "network");
    d.input_shape = field<std::vector<std::size_t>>(j, "input_shape", "network");
    if (!j.contains("layers") || !j["layers"].is_array()) throw FormatError("network: 'layers' must be an array");
    for (const auto& lj : j["layers"]) {
        LayerDesc l;
        l.name = field<std::string>(lj, "name", "layer");
        const std::string where = "layer " + l.name;
        const auto kind = field<std::string>(lj, "kind", where);
        const auto act = field_or<std::string>(lj, "activation", "none", where);
        if (act == "relu") l.activation = Activation::Relu;
        else if (act != "none") throw FormatError(where + ": unknown activation '" + act + "'");
        if (kind == "conv2d") {
            l.kind = LayerKind::Conv2d;
            l.in_channels = field<std::size_t>(lj, "in_channels", where);
            l.out_channels = field<std::size_t>(lj, "out_channels", where);
            l.kernel = field<std::size_t>(lj, "kernel", where);
            l.stride = field_or<std::size_t>(lj, "stride", 1, where);
            l.padding = field_or<std::size_t>(lj, "padding", 0, where);
        } else if (kind == "linear") {
            l.kind = LayerKind::Linear;
            l.in_features = field<std::size_t>(lj, "in_features", where);
            l.out_features = field<std::size_t>(lj, "out_features", where);
        } else if (kind == "attention-block") {
            l.kind = LayerKind::Attention;
            l.heads = field_or<std::size_t>(lj, "heads", 1, where);
            l.d_model = field<std::size_t>(lj, "d_model", where);
            l.d_ff = field<std::size_t>(lj, "d_ff", where);
        } else {
            throw FormatError(where + ": unsupported layer kind '" + kind + "'");
        }
        d.layers.push_back(l);
    }
    return d;
}

NetworkDesc builtin_arch(const std::string& name) {
    NetworkDesc d;
    d.name = name;
    if (name == "tiny-cnn") {
        d.input_shape = {1, 8, 8};
        LayerDesc c1{.name = "conv1", .kind = LayerKind::Conv2d, .activation = Activation::Relu, .in_channels = 1,
                     .out_channels = 8, .kernel = 3, .stride = 1, .padding = 1};
        LayerDesc c2{.name = "conv2", .kind = LayerKind::Conv2d, .activation = Activation::Relu, .in_channels = 8,
                     .out_channels = 16, .kernel = 3, .stride = 2, .padding = 1};
        LayerDesc f1{.name = "fc1", .kind = LayerKind::Linear, .activation = Activation::Relu, .in_features = 256,
                     .out_features = 64};
        LayerDesc f2{.name = "fc2", .kind = LayerKind::Linear, .in_features = 64, .out_features = 10};
        d.layers = {c1, c2, f1, f2};
        return d;
    }
    if (name == "tiny-attention") {
        d.input_shape = {8, 16};
        LayerDesc a{.name = "attn", .kind = LayerKind::Attention, .heads = 1, .d_model = 16, .d_ff = 32};
        LayerDesc f{.name = "head", .kind = LayerKind::Linear, .in_features = 128, .out_features = 10};
        d.layers = {a, f};
        return d;
    }
    throw DomainError("unknown built-in architecture '" + name + "'");
}

std::vector<std::string> builtin_arch_names() { return {"tiny-cnn", "tiny-attention"}; }

ModelBundle synth_model(std::uint64_t seed, const NetworkDesc& arch, const SynthOptions& opts) {
    ModelBundle b;
    b.desc = arch;
    // weights and inputs come from separate streams so the sample count does not shift weights
    Rng wrng(derive_seed(seed, 1));
    for (const auto& l : arch.layers) {
        for (const auto& [param, shape] : layer_parameters(l)) {
            Tensor t = Tensor::zeros(shape);
            if (param != "bias") {
                const std::size_t fan_in = l.kind == LayerKind::Conv2d ? shape[1] * shape[2] * shape[3] : shape[0];
                const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (auto& v : t.data) v = static_cast<float>(wrng.normal() * std);
            }
            b.weights.emplace(l.name + "." + param, std::move(t));
        }
    }
    std::vector<std::size_t> in_shape{opts.samples};
    in_shape.insert(in_shape.end(), arch.input_shape.begin(), arch.input_shape.end());
    b.inputs = Tensor::zeros(in_shape);
    Rng xrng(derive_seed(seed, 2));
    for (auto& v : b.inputs.data) v = static_cast<float>(xrng.normal());

    // center the teacher's logits over the evaluation set through the last bias so that
    // no class dominates the labels
    const LayerDesc& last = arch.layers.back();
    if (last.kind != LayerKind::Attention && opts.samples > 0) {
        const Tensor logits = run_reference(build_network(b.desc, b.weights), b.inputs);
        Tensor& bias = b.weights.at(last.name + ".bias");
        const std::size_t classes = bias.size();
        std::vector<double> mean(classes, 0.0);
        for (std::size_t i = 0; i < logits.size(); ++i) mean[i % classes] += logits.data[i];
        for (std::size_t c = 0; c < classes; ++c)
            bias.data[c] = static_cast<float>(-mean[c] / static_cast<double>(opts.samples));
    }
    const Network net = build_network(b.desc, b.weights);
    const Tensor out = run_reference(net, b.inputs);
    b.labels = IntTensor::zeros({opts.samples});
    const auto classes = argmax_rows(out);
    for (std::size_t i = 0; i < classes.size(); ++i) b.labels.data[i] = static_cast<std::int32_t>(classes[i]);
    return b;
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "weights");
    {
        std::ofstream out(dir / "network.json", std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / "network.json").string());
        out << to_json(b.desc).dump(2) << '\n';
    }
    for (const auto& [key, t] : b.weights) write_npy(dir / weight_file(key), t);
    write_npy(dir / "inputs.npy", b.inputs);
    write_npy(dir / "labels.npy", b.labels);
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
    std::ifstream in(dir / "network.json");
    if (!in) throw FormatError("cannot open " + (dir / "network.json").string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("network.json: " + std::string(e.what()));
    }
    ModelBundle b;
    b.desc = network_desc_from_json(j);
    for (std::size_t li = 0; li < b.desc.layers.size(); ++li) {
        const auto& l = b.desc.layers[li];
        const json& lj = j["layers"][li];
        for (const auto& [param, shape] : layer_parameters(l)) {
            const std::string key = l.name + "." + param;
            std::string rel = weight_file(key);
            if (lj.contains("weights") && lj["weights"].contains(param)) rel = lj["weights"][param].get<std::string>();
            Tensor t = read_tensor(dir / rel);
            if (t.shape != shape) throw ShapeError("weight " + key + " has an unexpected shape");
            b.weights.emplace(key, std::move(t));
        }
    }
    b.inputs = read_tensor(dir / "inputs.npy");
    b.labels = read_int_tensor(dir / "labels.npy");
    if (b.labels.shape.size() != 1 || b.labels.shape[0] != b.samples())
        throw ShapeError("labels length does not match the number of inputs");
    return b;
}

}  // namespace cimsim
