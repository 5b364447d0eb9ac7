#include "cimsim/netgraph.hpp"

#include "cimsim/error.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/rng.hpp"

#include <algorithm>
#include <cmath>

namespace cimsim {
namespace {

constexpr std::uint64_t kSiteStream = 1000;

float apply(Activation a, float v) { return a == Activation::Relu ? std::max(v, 0.0f) : v; }

Tensor float_matmul(const Tensor& x, const Tensor& w) {
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[0])
        throw ShapeError("matmul operand shapes do not agree");
    const std::size_t v = x.shape[0], r = x.shape[1], c = w.shape[1];
    Tensor y = Tensor::zeros({v, c});
    const auto n = static_cast<std::int64_t>(v);
#pragma omp parallel
    {
        std::vector<double> acc(c);
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            const auto vi = static_cast<std::size_t>(i);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t k = 0; k < r; ++k) {
                const double xv = x.data[vi * r + k];
                if (xv == 0.0) continue;
                const float* wr = w.data.data() + k * c;
                for (std::size_t j = 0; j < c; ++j) acc[j] += xv * wr[j];
            }
            for (std::size_t j = 0; j < c; ++j) y.data[vi * c + j] = static_cast<float>(acc[j]);
        }
    }
    return y;
}

const Tensor& lookup(const std::map<std::string, Tensor>& weights, const std::string& key,
                     const std::vector<std::size_t>& shape) {
    const auto it = weights.find(key);
    if (it == weights.end()) throw ShapeError("missing weights for " + key);
    if (it->second.shape != shape) throw ShapeError("weights " + key + " have an unexpected shape");
    return it->second;
}

void softmax_rows(Tensor& t, double scale) {
    const std::size_t rows = t.shape[0], cols = t.shape[1];
    std::vector<double> e(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        float* row = t.data.data() + i * cols;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, scale * row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += e[j] = std::exp(scale * row[j] - mx);
        for (std::size_t j = 0; j < cols; ++j) row[j] = static_cast<float>(e[j] / sum);
    }
}

Tensor attention_forward(const Network& net, const NetLayer& layer, const Tensor& act, MatmulBackend& be) {
    const std::size_t s_count = act.shape[0];
    const std::size_t seq = layer.in_shape[0], d = layer.in_shape[1];
    const std::size_t heads = layer.desc.heads, dh = d / heads;
    const auto& st = layer.stages;  // qkv, qk, softmax, pv, out_proj, ffn1, ffn2

    const Tensor x({s_count * seq, d}, act.data);
    const Tensor q = be.smm(st[0].sites[0], x, layer.matrices.at("wq"));
    const Tensor k = be.smm(st[0].sites[1], x, layer.matrices.at("wk"));
    const Tensor v = be.smm(st[0].sites[2], x, layer.matrices.at("wv"));

    Tensor o = Tensor::zeros({s_count * seq, d});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<Tensor> qh, kt, vh;
        for (std::size_t s = 0; s < s_count; ++s) {
            Tensor a = Tensor::zeros({seq, dh}), b = Tensor::zeros({dh, seq}), c = Tensor::zeros({seq, dh});
            for (std::size_t i = 0; i < seq; ++i)
                for (std::size_t j = 0; j < dh; ++j) {
                    const std::size_t src = (s * seq + i) * d + h * dh + j;
                    a.at(i, j) = q.data[src];
                    b.at(j, i) = k.data[src];
                    c.at(i, j) = v.data[src];
                }
            qh.push_back(std::move(a));
            kt.push_back(std::move(b));
            vh.push_back(std::move(c));
        }
        auto scores = be.dmm(st[1].sites[h], qh, kt, false);
        for (auto& sc : scores) softmax_rows(sc, scale);
        const auto out = be.dmm(st[3].sites[h], scores, vh, true);
        for (std::size_t s = 0; s < s_count; ++s)
            for (std::size_t i = 0; i < seq; ++i)
                for (std::size_t j = 0; j < dh; ++j) o.data[(s * seq + i) * d + h * dh + j] = out[s].at(i, j);
    }

    Tensor hres = be.smm(st[4].sites[0], o, layer.matrices.at("wo"));
    for (std::size_t e = 0; e < hres.size(); ++e) hres.data[e] += x.data[e];
    Tensor f1 = be.smm(st[5].sites[0], hres, layer.matrices.at("w1"));
    for (auto& val : f1.data) val = std::max(val, 0.0f);
    Tensor y = be.smm(st[6].sites[0], f1, layer.matrices.at("w2"));
    for (std::size_t e = 0; e < y.size(); ++e) y.data[e] += hres.data[e];
    (void)net;
    y.shape = {s_count, seq, d};
    return y;
}

class ReferenceBackend : public MatmulBackend {
public:
    Tensor smm(std::size_t, const Tensor& x, const Tensor& w) override { return float_matmul(x, w); }
    std::vector<Tensor> dmm(std::size_t, const std::vector<Tensor>& xs, const std::vector<Tensor>& ws, bool) override {
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < xs.size(); ++i) out.push_back(float_matmul(xs[i], ws[i]));
        return out;
    }
};

// Shared quantization policy; `cim` selects the analog pipeline over exact integer matmuls.
class QuantBackend : public MatmulBackend {
public:
    QuantBackend(const Network& net, const SimulationConfig& cfg, bool cim, const CimRunOptions& opts)
        : net_(net), cfg_(cfg), cim_(cim), opts_(opts) {
        if (cim) records_.resize(net.sites.size());
    }

    Tensor smm(std::size_t site, const Tensor& x, const Tensor& w) override {
        const QuantizedTensor qx = quantize(x, activation_params(x, cfg_, false));
        const QuantizedTensor qw = quantize(w, calibrate(w, cfg_.quant.scheme, cfg_.quant.weight_bits));
        if (!cim_) return integer_matmul(qx, qw).dequantized();

        SiteRecord& rec = start_record(site, qx.params.bits);
        Rng rng(derive_seed(cfg_.seed, kSiteStream + site));
        const ProgrammedWeights pw = program_weights(qw, rec.pipeline, rng);
        AdcSamples samples;
        if (rec.pipeline.adc.kind == AdcKind::Calibrated) collect_adc_samples(pw, qx, cap(), samples);
        const AdcBank bank = make_adc_bank(rec.pipeline, pw.groups, &samples);
        MatmulOutput out = run_matmul(pw, qx, bank);
        record(rec, pw, out.trace);
        return out.dequantized();
    }

    std::vector<Tensor> dmm(std::size_t site, const std::vector<Tensor>& xs, const std::vector<Tensor>& ws,
                            bool probabilities) override {
        const std::size_t n = xs.size();
        std::vector<QuantizedTensor> qx(n), qw(n);
        for (std::size_t i = 0; i < n; ++i) {
            qx[i] = quantize(xs[i], activation_params(xs[i], cfg_, probabilities));
            qw[i] = quantize(ws[i], calibrate(ws[i], cfg_.quant.scheme, cfg_.quant.weight_bits));
        }
        std::vector<Tensor> result(n);
        if (!cim_) {
            for (std::size_t i = 0; i < n; ++i) result[i] = integer_matmul(qx[i], qw[i]).dequantized();
            return result;
        }

        SiteRecord& rec = start_record(site, cfg_.quant.input_bits);
        const std::uint64_t site_seed = derive_seed(cfg_.seed, kSiteStream + site);
        std::vector<ProgrammedWeights> pw(n);
        const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < count; ++i) {
            Rng rng(derive_seed(site_seed, static_cast<std::uint64_t>(i)));
            pw[static_cast<std::size_t>(i)] = program_weights(qw[static_cast<std::size_t>(i)], rec.pipeline, rng);
        }
        AdcSamples samples;
        if (rec.pipeline.adc.kind == AdcKind::Calibrated) {
            const std::size_t per = std::max<std::size_t>(1, cap() / std::max<std::size_t>(1, n));
            for (std::size_t i = 0; i < n; ++i) collect_adc_samples(pw[i], qx[i], per, samples);
        }
        const AdcBank bank = make_adc_bank(rec.pipeline, n ? pw[0].groups : 0, &samples);
        std::vector<MatmulOutput> outs(n);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < count; ++i) {
            const auto vi = static_cast<std::size_t>(i);
            outs[vi] = run_matmul(pw[vi], qx[vi], bank);
        }
        for (std::size_t i = 0; i < n; ++i) {
            record(rec, pw[i], outs[i].trace);
            result[i] = outs[i].dequantized();
        }
        return result;
    }

    std::vector<SiteRecord> take_records() { return std::move(records_); }

private:
    std::size_t cap() const { return opts_.adc_sample_cap ? opts_.adc_sample_cap : default_adc_sample_cap(); }

    SiteRecord& start_record(std::size_t site, int input_bits) {
        SiteRecord& rec = records_.at(site);
        rec.site = net_.sites.at(site);
        rec.pipeline = site_pipeline(cfg_, rec.site.kind);
        rec.plan = site_plan(rec.site, cfg_);
        rec.input_bits = input_bits;
        rec.stats = LayerStats{};
        rec.traces.clear();
        return rec;
    }

    void record(SiteRecord& rec, const ProgrammedWeights& pw, MacTrace& trace) {
        rec.stats.add_run(pw, trace);
        if (opts_.keep_traces) {
            InvocationTrace it;
            for (std::size_t s = 0; s < pw.plan.slots.size(); ++s) it.slot_g_mean.push_back(pw.slot_g_mean(s));
            it.trace = std::move(trace);
            rec.traces.push_back(std::move(it));
        }
    }

    const Network& net_;
    const SimulationConfig& cfg_;
    bool cim_;
    CimRunOptions opts_;
    std::vector<SiteRecord> records_;
};

}  // namespace

std::string to_string(SiteKind k) { return k == SiteKind::Smm ? "SMM" : "DMM"; }

std::string to_string(StageKind k) {
    switch (k) {
        case StageKind::Smm: return "SMM";
        case StageKind::Dmm: return "DMM";
        case StageKind::Digital: return "digital";
    }
    return "?";
}

std::size_t Network::site_index(const std::string& name) const {
    for (std::size_t i = 0; i < sites.size(); ++i)
        if (sites[i].name == name) return i;
    throw DomainError("no matmul site named " + name);
}

std::size_t Network::output_size() const { return shape_product(layers.back().out_shape); }

std::size_t Network::macs_per_sample() const {
    std::size_t n = 0;
    for (const auto& s : sites) n += s.macs_per_sample();
    return n;
}

std::vector<std::string> attention_stage_names() {
    return {"qkv", "qk", "softmax", "pv", "out_proj", "ffn1", "ffn2"};
}

Network build_network(const NetworkDesc& desc, const std::map<std::string, Tensor>& weights) {
    if (desc.layers.empty()) throw DomainError("network has no layers");
    if (desc.input_shape.empty() || shape_product(desc.input_shape) == 0) throw ShapeError("input shape is empty");
    Network net;
    net.desc = desc;
    std::vector<std::size_t> shape = desc.input_shape;

    auto add_site = [&net](MatmulSite s) {
        net.sites.push_back(std::move(s));
        return net.sites.size() - 1;
    };

    for (std::size_t li = 0; li < desc.layers.size(); ++li) {
        const LayerDesc& l = desc.layers[li];
        NetLayer layer;
        layer.desc = l;
        layer.in_shape = shape;
        const std::string where = "layer " + l.name;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                if (shape.size() != 3 || shape[0] != l.in_channels)
                    throw ShapeError(where + ": expects " + std::to_string(l.in_channels) + " input channels");
                if (l.kernel == 0 || l.stride == 0) throw ShapeError(where + ": kernel and stride must be positive");
                const std::size_t h = shape[1], w = shape[2];
                if (h + 2 * l.padding < l.kernel || w + 2 * l.padding < l.kernel)
                    throw ShapeError(where + ": kernel larger than padded input");
                const std::size_t ho = (h + 2 * l.padding - l.kernel) / l.stride + 1;
                const std::size_t wo = (w + 2 * l.padding - l.kernel) / l.stride + 1;
                const auto params = layer_parameters(l);
                const Tensor& wt = lookup(weights, l.name + ".weight", params[0].second);
                const std::size_t kk = l.kernel * l.kernel, rows = l.in_channels * kk;
                Tensor m = Tensor::zeros({rows, l.out_channels});
                for (std::size_t co = 0; co < l.out_channels; ++co)
                    for (std::size_t r = 0; r < rows; ++r) m.at(r, co) = wt.data[co * rows + r];
                layer.matrices.emplace("weight", std::move(m));
                layer.bias = lookup(weights, l.name + ".bias", params[1].second);
                layer.out_shape = {l.out_channels, ho, wo};
                const std::size_t id = add_site({l.name, SiteKind::Smm, "conv", li, -1, rows, l.out_channels, ho * wo});
                layer.stages.push_back({"conv", StageKind::Smm, {id}});
                layer.digital_ops_per_sample = l.out_channels * ho * wo * (l.activation == Activation::Relu ? 2 : 1);
                break;
            }
            case LayerKind::Linear: {
                if (shape_product(shape) != l.in_features)
                    throw ShapeError(where + ": expects " + std::to_string(l.in_features) + " input features");
                const auto params = layer_parameters(l);
                layer.matrices.emplace("weight", lookup(weights, l.name + ".weight", params[0].second));
                layer.bias = lookup(weights, l.name + ".bias", params[1].second);
                layer.out_shape = {l.out_features};
                const std::size_t id = add_site({l.name, SiteKind::Smm, "linear", li, -1, l.in_features, l.out_features, 1});
                layer.stages.push_back({"linear", StageKind::Smm, {id}});
                layer.digital_ops_per_sample = l.out_features * (l.activation == Activation::Relu ? 2 : 1);
                break;
            }
            case LayerKind::Attention: {
                if (shape.size() != 2 || shape[1] != l.d_model)
                    throw ShapeError(where + ": expects [sequence, " + std::to_string(l.d_model) + "] input");
                if (l.heads == 0 || l.heads > 4 || l.d_model % l.heads != 0)
                    throw ShapeError(where + ": heads must divide d_model and be at most 4");
                if (shape[0] == 0 || shape[0] > 64) throw ShapeError(where + ": sequence length must be 1..64");
                if (l.d_ff == 0) throw ShapeError(where + ": d_ff must be positive");
                const std::size_t seq = shape[0], d = l.d_model, dh = d / l.heads;
                for (const auto& [param, pshape] : layer_parameters(l))
                    layer.matrices.emplace(param, lookup(weights, l.name + "." + param, pshape));
                layer.out_shape = shape;
                const std::string p = l.name + ".";
                Stage qkv{"qkv", StageKind::Smm, {}};
                for (const char* n : {"q", "k", "v"}) qkv.sites.push_back(add_site({p + n, SiteKind::Smm, "qkv", li, -1, d, d, seq}));
                Stage qk{"qk", StageKind::Dmm, {}}, pv{"pv", StageKind::Dmm, {}};
                for (std::size_t h = 0; h < l.heads; ++h)
                    qk.sites.push_back(add_site({p + "qk.h" + std::to_string(h), SiteKind::Dmm, "qk", li, static_cast<int>(h), dh, seq, seq}));
                for (std::size_t h = 0; h < l.heads; ++h)
                    pv.sites.push_back(add_site({p + "pv.h" + std::to_string(h), SiteKind::Dmm, "pv", li, static_cast<int>(h), seq, dh, seq}));
                layer.stages.push_back(std::move(qkv));
                layer.stages.push_back(std::move(qk));
                layer.stages.push_back({"softmax", StageKind::Digital, {}});
                layer.stages.push_back(std::move(pv));
                layer.stages.push_back({"out_proj", StageKind::Smm, {add_site({p + "o", SiteKind::Smm, "out_proj", li, -1, d, d, seq})}});
                layer.stages.push_back({"ffn1", StageKind::Smm, {add_site({p + "ffn1", SiteKind::Smm, "ffn1", li, -1, d, l.d_ff, seq})}});
                layer.stages.push_back({"ffn2", StageKind::Smm, {add_site({p + "ffn2", SiteKind::Smm, "ffn2", li, -1, l.d_ff, d, seq})}});
                // scale, exp, sum and divide per score; two residual adds; ffn relu
                layer.digital_ops_per_sample = l.heads * seq * seq * 4 + 2 * seq * d + seq * l.d_ff;
                break;
            }
        }
        shape = layer.out_shape;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad) {
    if (x.shape.size() != 4) throw ShapeError("im2col expects [S, C, H, W]");
    const std::size_t s_count = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
    const std::size_t rows = c * k * k;
    Tensor out = Tensor::zeros({s_count * ho * wo, rows});
    for (std::size_t s = 0; s < s_count; ++s)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                float* dst = out.data.data() + ((s * ho + oy) * wo + ox) * rows;
                for (std::size_t ci = 0; ci < c; ++ci)
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            float v = 0.0f;
                            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix < static_cast<std::ptrdiff_t>(w))
                                v = x.data[((s * c + ci) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                            dst[(ci * k + ky) * k + kx] = v;
                        }
            }
    return out;
}

Tensor run_forward(const Network& net, const Tensor& inputs, MatmulBackend& be) {
    if (inputs.shape.size() != net.desc.input_shape.size() + 1 ||
        !std::equal(net.desc.input_shape.begin(), net.desc.input_shape.end(), inputs.shape.begin() + 1))
        throw ShapeError("input tensor does not match the network input shape");
    const std::size_t s_count = inputs.shape[0];
    Tensor act = inputs;
    for (const auto& layer : net.layers) {
        const auto& l = layer.desc;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                Tensor x4 = act;
                x4.shape = {s_count, layer.in_shape[0], layer.in_shape[1], layer.in_shape[2]};
                const Tensor cols = im2col(x4, l.kernel, l.stride, l.padding);
                const Tensor y = be.smm(layer.stages[0].sites[0], cols, layer.matrices.at("weight"));
                const std::size_t pos = layer.out_shape[1] * layer.out_shape[2], co = l.out_channels;
                Tensor out = Tensor::zeros({s_count, co, layer.out_shape[1], layer.out_shape[2]});
                for (std::size_t s = 0; s < s_count; ++s)
                    for (std::size_t p = 0; p < pos; ++p)
                        for (std::size_t c = 0; c < co; ++c)
                            out.data[(s * co + c) * pos + p] = apply(l.activation, y.data[(s * pos + p) * co + c] + layer.bias.data[c]);
                act = std::move(out);
                break;
            }
            case LayerKind::Linear: {
                const Tensor x({s_count, l.in_features}, act.data);
                Tensor y = be.smm(layer.stages[0].sites[0], x, layer.matrices.at("weight"));
                for (std::size_t s = 0; s < s_count; ++s)
                    for (std::size_t c = 0; c < l.out_features; ++c)
                        y.data[s * l.out_features + c] = apply(l.activation, y.data[s * l.out_features + c] + layer.bias.data[c]);
                act = std::move(y);
                break;
            }
            case LayerKind::Attention: act = attention_forward(net, layer, act, be); break;
        }
    }
    return act;
}

Tensor run_reference(const Network& net, const Tensor& inputs) {
    ReferenceBackend be;
    return run_forward(net, inputs, be);
}

QuantParams activation_params(const Tensor& x, const SimulationConfig& cfg, bool probabilities) {
    const int m = cfg.quant.input_bits;
    if (probabilities) return calibrate_max(1.0, cfg.quant.scheme, m, Signedness::Unsigned);
    const bool nonneg = std::all_of(x.data.begin(), x.data.end(), [](float v) { return v >= 0.0f; });
    const Signedness sign = cfg.mapping.input_sign_mode == InputSignMode::UnsignedBitSerial && nonneg
                                ? Signedness::Unsigned
                                : Signedness::Signed;
    return calibrate(x, cfg.quant.scheme, m, sign);
}

Tensor run_software_quantized(const Network& net, const Tensor& inputs, const SimulationConfig& cfg) {
    QuantBackend be(net, cfg, false, {});
    return run_forward(net, inputs, be);
}

double LayerStats::alpha_avg() const {
    return offered_rows ? static_cast<double>(active_rows) / static_cast<double>(offered_rows) : 0.0;
}

double LayerStats::g_avg() const { return cells ? g_sum.value() / static_cast<double>(cells) : 0.0; }

void LayerStats::add_run(const ProgrammedWeights& pw, const MacTrace& trace) {
    vectors += trace.vectors;
    cycles = trace.cycles;
    ++invocations;
    for (auto a : trace.active) active_rows += a;
    offered_rows += static_cast<std::uint64_t>(trace.vectors) * static_cast<std::uint64_t>(trace.cycles) *
                    pw.plan.rows_total;
    for (std::size_t s = 0; s < pw.plan.slots.size(); ++s) {
        g_sum.add(pw.slot_g_sum[s]);
        cells += pw.plan.slots[s].mask.used_rows * pw.plan.slots[s].mask.used_cols;
    }
    if (masks.empty()) masks = pw.plan.mask_groups();
}

PipelineConfig site_pipeline(const SimulationConfig& cfg, SiteKind kind) {
    PipelineConfig p;
    p.design = cfg.mapping.design;
    p.offset_cancellation = cfg.mapping.offset_cancellation;
    p.adc = cfg.adc;
    p.adc_share = cfg.arch.adc_share;
    if (kind == SiteKind::Smm) {
        p.device = cfg.device;
        p.cell_bits = cfg.mapping.cell_bits;
        p.subarray_rows = cfg.arch.subarray_rows;
        p.subarray_cols = cfg.arch.subarray_cols;
    } else {
        p.device = cfg.arch.dmm_device;
        p.cell_bits = std::min(cfg.mapping.cell_bits, cfg.arch.dmm_device.cell_bits_max);
        p.subarray_rows = cfg.arch.dmm_subarray_rows;
        p.subarray_cols = cfg.arch.dmm_subarray_cols;
    }
    if (cfg.adc.kind == AdcKind::Custom) p.custom_adc = load_adc_spec(cfg.adc.custom_path);
    return p;
}

TilePlan site_plan(const MatmulSite& site, const SimulationConfig& cfg) {
    const PipelineConfig p = site_pipeline(cfg, site.kind);
    return tile(site.rows, site.cols, p.subarray_rows, p.subarray_cols, p.design, cfg.quant.weight_bits, p.cell_bits);
}

CimRun run_cim(const Network& net, const Tensor& inputs, const SimulationConfig& cfg, const CimRunOptions& opts) {
    QuantBackend be(net, cfg, true, opts);
    CimRun run;
    run.outputs = run_forward(net, inputs, be);
    run.sites = be.take_records();
    return run;
}

std::vector<std::size_t> argmax_rows(const Tensor& t) {
    if (t.shape.empty()) throw ShapeError("argmax of a scalar");
    const std::size_t n = t.shape[0];
    const std::size_t width = n ? t.size() / n : 0;
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = t.data.data() + i * width;
        out[i] = static_cast<std::size_t>(std::max_element(row, row + width) - row);
    }
    return out;
}

double fidelity(const Tensor& outputs, const Tensor& reference) {
    if (outputs.shape.empty() || outputs.shape != reference.shape) throw ShapeError("fidelity needs equal shapes");
    const auto a = argmax_rows(outputs), b = argmax_rows(reference);
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return a.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(a.size());
}

double fidelity(const Tensor& outputs, const IntTensor& labels) {
    const auto a = argmax_rows(outputs);
    if (labels.size() != a.size()) throw ShapeError("fidelity needs one label per output");
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += static_cast<std::int32_t>(a[i]) == labels.data[i];
    return a.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace cimsim
