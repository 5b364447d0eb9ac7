#pragma once

#include "cimsim/cimkernel.hpp"
#include "cimsim/hwperf.hpp"
#include "cimsim/netgraph.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/rng.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace testutil {

using namespace cimsim;

/// Uniform integers in [lo, hi] as a quantized matrix with unit scale.
inline QuantizedTensor random_ints(Rng& rng, std::size_t rows, std::size_t cols, int bits, Signedness sign) {
    QuantizedTensor q;
    q.shape = {rows, cols};
    q.params = {QuantScheme::UniformSymmetric, bits, 1.0, sign};
    const std::int32_t lo = q.params.qmin(), hi = q.params.qmax();
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    q.values.resize(rows * cols);
    for (auto& v : q.values) v = lo + static_cast<std::int32_t>(rng.next() % span);
    return q;
}

inline QuantizedTensor ints(std::vector<std::size_t> shape, std::vector<std::int32_t> values, int bits,
                            Signedness sign = Signedness::Signed) {
    QuantizedTensor q;
    q.shape = std::move(shape);
    q.values = std::move(values);
    q.params = {QuantScheme::UniformSymmetric, bits, 1.0, sign};
    return q;
}

/// Plain triple loop in 64-bit integers.
inline std::vector<std::int64_t> brute_matmul(const QuantizedTensor& x, const QuantizedTensor& w) {
    const std::size_t v = x.shape[0], r = x.shape[1], c = w.shape[1];
    std::vector<std::int64_t> y(v * c, 0);
    for (std::size_t i = 0; i < v; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < r; ++k)
                y[i * c + j] += static_cast<std::int64_t>(x.values[i * r + k]) * w.values[k * c + j];
    return y;
}

/// Linear ADC whose centers are consecutive integers covering every column value the
/// ideal pipeline can produce, so conversion is the identity on them.
inline AdcSpec identity_adc(Design design, std::size_t rows, int cell_bits) {
    int p = 1;
    const long long span = static_cast<long long>(rows) * ((1 << cell_bits) - 1);
    while ((1LL << p) - 1 < span) ++p;
    if (design == Design::Design2) return build_linear_adc(p + 1, -((1LL << p) - 1), 1LL << p);
    return build_linear_adc(p, 0.0, static_cast<double>((1LL << p) - 1));
}

class TempDir {
public:
    TempDir() {
        static std::uint64_t counter = 0;
        Rng rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^ ++counter);
        path_ = std::filesystem::temp_directory_path() / ("cimsim-test-" + std::to_string(rng.next() % 1000000000));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

/// One linear layer fed with hand-picked integer operands, estimated without going
/// through activation quantization.
struct LinearFixture {
    Network net;
    ChipPlan chip;
    std::vector<SiteRecord> records;
};

inline LinearFixture linear_fixture(SimulationConfig cfg, const QuantizedTensor& w, const QuantizedTensor& x) {
    const std::size_t r = w.shape[0], c = w.shape[1];
    cfg.quant.weight_bits = w.params.bits;
    cfg.quant.input_bits = x.params.bits;
    cfg.adc.kind = AdcKind::Ideal;

    NetworkDesc desc;
    desc.name = "fixture";
    desc.input_shape = {r};
    LayerDesc fc;
    fc.name = "fc";
    fc.kind = LayerKind::Linear;
    fc.in_features = r;
    fc.out_features = c;
    desc.layers = {fc};
    std::map<std::string, Tensor> weights;
    weights["fc.weight"] = dequantize(w);
    weights["fc.bias"] = Tensor::zeros({c});

    LinearFixture f;
    f.net = build_network(desc, weights);
    f.chip = build_chip(f.net, cfg);

    SiteRecord rec;
    rec.site = f.net.sites.at(0);
    rec.pipeline = site_pipeline(cfg, SiteKind::Smm);
    rec.plan = site_plan(rec.site, cfg);
    rec.input_bits = x.params.bits;
    Rng rng(cfg.seed);
    const ProgrammedWeights pw = program_weights(w, rec.pipeline, rng);
    MatmulOutput out = run_matmul(pw, x, make_adc_bank(rec.pipeline, pw.groups, nullptr));
    rec.stats.add_run(pw, out.trace);
    InvocationTrace it;
    for (std::size_t s = 0; s < pw.plan.slots.size(); ++s) it.slot_g_mean.push_back(pw.slot_g_mean(s));
    it.trace = std::move(out.trace);
    rec.traces.push_back(std::move(it));
    f.records.push_back(std::move(rec));
    return f;
}

/// Design2, k=4, N=M=4, 128x64 weights on 64x64 arrays, 64 vectors whose entries are
/// 0b0101 or 0b1010: every row is driven in exactly half of the cycles.
inline LinearFixture uniform_activity_fixture(std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.seed = seed;
    cfg.mapping.design = Design::Design2;
    cfg.mapping.cell_bits = 4;
    cfg.device.on_off_ratio = 16.0;  // offset (2^4-1)/15 = 1
    cfg.arch.subarray_rows = cfg.arch.subarray_cols = 64;
    Rng rng(seed);
    const QuantizedTensor w = random_ints(rng, 128, 64, 4, Signedness::Signed);
    QuantizedTensor x = random_ints(rng, 64, 128, 4, Signedness::Unsigned);
    for (auto& v : x.values) v = (rng.next() & 1) ? 0b0101 : 0b1010;
    return linear_fixture(cfg, w, x);
}

/// Design3, k=4, N=M=4, all-zero weights (every cell holds the shifted value 8), 128x126
/// on 128x128 arrays, 64 random vectors.
inline LinearFixture uniform_conductance_fixture(std::uint64_t seed) {
    SimulationConfig cfg;
    cfg.seed = seed;
    cfg.mapping.design = Design::Design3;
    cfg.mapping.cell_bits = 4;
    cfg.device.on_off_ratio = 16.0;
    Rng rng(seed);
    const QuantizedTensor w = ints({128, 126}, std::vector<std::int32_t>(128 * 126, 0), 4);
    const QuantizedTensor x = random_ints(rng, 64, 128, 4, Signedness::Unsigned);
    return linear_fixture(cfg, w, x);
}

}  // namespace testutil
