#include "cimsim/error.hpp"
#include "cimsim/netgraph.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace cimsim;

namespace {

constexpr Design kDesigns[] = {Design::Design1, Design::Design2, Design::Design3};

SimulationConfig ideal_config(Design design, int k) {
    SimulationConfig cfg;
    cfg.mapping.design = design;
    cfg.mapping.cell_bits = k;
    cfg.device.on_off_ratio = kInfiniteRatio;
    cfg.device.sigma_cell = 0.0;
    cfg.adc.kind = AdcKind::Ideal;
    cfg.quant = {QuantScheme::UniformSymmetric, 4, 4};
    return cfg;
}

Tensor rows_of(std::size_t n, std::size_t width, std::vector<float> values) {
    Tensor t({n, width}, std::move(values));
    return t;
}

}  // namespace

TEST_CASE("im2col on a 3x3 image") {
    Tensor x = Tensor::zeros({1, 1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) x.data[i] = static_cast<float>(i + 1);
    const Tensor a = im2col(x, 2, 1, 0);
    CHECK(a.shape == std::vector<std::size_t>{4, 4});
    CHECK(std::vector<float>(a.data.begin(), a.data.begin() + 4) == std::vector<float>{1, 2, 4, 5});
    CHECK(std::vector<float>(a.data.end() - 4, a.data.end()) == std::vector<float>{5, 6, 8, 9});
    const Tensor b = im2col(x, 3, 2, 1);
    CHECK(b.shape == std::vector<std::size_t>{4, 9});
    CHECK(std::vector<float>(b.data.begin(), b.data.begin() + 9) == std::vector<float>{0, 0, 0, 0, 1, 2, 0, 4, 5});
    // two channels, two samples: columns are (c, ky, kx)
    Tensor y = Tensor::zeros({2, 2, 4, 4});
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] = static_cast<float>(i);
    const Tensor c = im2col(y, 3, 1, 1);
    CHECK(c.shape == std::vector<std::size_t>{2 * 16, 18});
    // sample 1, position (1, 1), channel 1, tap (0, 0) is pixel (0, 0) of that plane
    CHECK(c.data[(16 + 5) * 18 + 9] == y.data[(1 * 2 + 1) * 16 + 0]);
}

TEST_CASE("attention blocks lower to seven stages") {
    const ModelBundle b = synth_model(1, builtin_arch("tiny-attention"), {4});
    const Network net = build_network(b);
    const auto& stages = net.layers.at(0).stages;
    REQUIRE(stages.size() == 7);
    const std::vector<StageKind> kinds{StageKind::Smm, StageKind::Dmm, StageKind::Digital, StageKind::Dmm,
                                       StageKind::Smm, StageKind::Smm, StageKind::Smm};
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(stages[i].name == attention_stage_names()[i]);
        CHECK(stages[i].kind == kinds[i]);
    }
    CHECK(stages[2].sites.empty());
    CHECK(stages[0].sites.size() == 3);
    for (std::size_t s : stages[1].sites) CHECK(net.sites[s].kind == SiteKind::Dmm);
    CHECK(net.layers.at(1).stages.at(0).name == "linear");
}

TEST_CASE("network construction errors") {
    NetworkDesc empty;
    empty.input_shape = {4};
    CHECK_THROWS_AS(build_network(empty, {}), DomainError);
    const ModelBundle b = synth_model(1, builtin_arch("tiny-cnn"), {4});
    auto weights = b.weights;
    weights.erase("conv2.weight");
    CHECK_THROWS_AS(build_network(b.desc, weights), ShapeError);
    weights = b.weights;
    weights["fc1.weight"] = Tensor::zeros({255, 64});
    CHECK_THROWS_AS(build_network(b.desc, weights), ShapeError);
}

TEST_CASE("zero input through bias-free layers gives zero output") {
    for (const auto& arch : builtin_arch_names()) {
        ModelBundle b = synth_model(2, builtin_arch(arch), {3});
        for (auto& [name, t] : b.weights)
            if (name.ends_with(".bias")) t = Tensor::zeros(t.shape);
        const Network net = build_network(b);
        const Tensor zero = Tensor::zeros(b.inputs.shape);
        for (float v : run_reference(net, zero).data) CHECK(v == 0.0f);
        for (float v : run_cim(net, zero, ideal_config(Design::Design2, 2)).outputs.data) CHECK(v == 0.0f);
    }
}

TEST_CASE("a linear layer matches a direct matmul") {
    Rng rng(3);
    NetworkDesc d;
    d.input_shape = {5};
    d.layers = {LayerDesc{.name = "fc", .kind = LayerKind::Linear, .activation = Activation::Relu, .in_features = 5,
                          .out_features = 3}};
    std::map<std::string, Tensor> w;
    w["fc.weight"] = Tensor::zeros({5, 3});
    w["fc.bias"] = Tensor::zeros({3});
    for (auto& v : w["fc.weight"].data) v = static_cast<float>(rng.normal());
    for (auto& v : w["fc.bias"].data) v = static_cast<float>(rng.normal());
    Tensor x = Tensor::zeros({4, 5});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    const Tensor y = run_reference(build_network(d, w), x);
    REQUIRE(y.shape == std::vector<std::size_t>{4, 3});
    for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t c = 0; c < 3; ++c) {
            double acc = w["fc.bias"].data[c];
            for (std::size_t i = 0; i < 5; ++i) acc += static_cast<double>(x.data[s * 5 + i]) * w["fc.weight"].data[i * 3 + c];
            CHECK(y.data[s * 3 + c] == doctest::Approx(std::max(acc, 0.0)).epsilon(1e-5));
        }
}

TEST_CASE("ideal CIM hardware equals the quantized software pass") {
    for (const auto& arch : builtin_arch_names())
        for (Design design : kDesigns)
            for (int k : {1, 2}) {
                const ModelBundle b = synth_model(4, builtin_arch(arch), {16});
                const Network net = build_network(b);
                const SimulationConfig cfg = ideal_config(design, k);
                CAPTURE(arch);
                CAPTURE(static_cast<int>(design));
                CHECK(run_cim(net, b.inputs, cfg).outputs == run_software_quantized(net, b.inputs, cfg));
            }
}

TEST_CASE("activity statistics pool over runs") {
    SimulationConfig cfg = ideal_config(Design::Design3, 2);
    Rng rng(1);
    PipelineConfig p = site_pipeline(cfg, SiteKind::Smm);
    const ProgrammedWeights pw = program_weights(testutil::random_ints(rng, 8, 4, 4, Signedness::Signed), p, rng);
    LayerStats stats;
    MacTrace a{1, 1, 1, {3}, 0}, b{1, 1, 1, {5}, 0};
    stats.add_run(pw, a);
    CHECK(stats.alpha_avg() == 0.375);
    stats.add_run(pw, b);
    CHECK(stats.alpha_avg() == 0.5);
    CHECK(stats.vectors == 2);
    CHECK(stats.invocations == 2);
    CHECK(stats.masks == pw.plan.mask_groups());
}

TEST_CASE("site records on tiny-cnn") {
    const ModelBundle b = synth_model(5, builtin_arch("tiny-cnn"), {12});
    const Network net = build_network(b);
    SimulationConfig cfg = ideal_config(Design::Design3, 2);
    cfg.device.on_off_ratio = 17.0;
    cfg.device.sigma_cell = 0.05;
    const CimRun run = run_cim(net, b.inputs, cfg);
    REQUIRE(run.sites.size() == net.sites.size());
    for (std::size_t s = 0; s < net.sites.size(); ++s) {
        const SiteRecord& rec = run.sites[s];
        const MatmulSite& site = net.sites[s];
        CAPTURE(site.name);
        // conv sites see one vector per output pixel
        CHECK(rec.stats.vectors == 12 * site.vectors_per_sample);
        CHECK(rec.stats.masks == rec.plan.mask_groups());
        CHECK(rec.stats.alpha_avg() > 0.0);
        CHECK(rec.stats.alpha_avg() < 1.0);

        // brute-force mean conductance over every programmed cell
        const Tensor& w = net.layers.at(site.layer).matrices.at("weight");
        const QuantizedTensor qw = quantize(w, calibrate(w, cfg.quant.scheme, cfg.quant.weight_bits));
        Rng rng(derive_seed(cfg.seed, 1000 + s));
        const ProgrammedWeights pw = program_weights(qw, rec.pipeline, rng);
        double sum = 0.0;
        std::size_t cells = 0;
        for (const auto& a : pw.cells)
            for (std::size_t r = 0; r < a.rows; ++r)
                for (std::size_t c = 0; c < a.cols; ++c, ++cells) sum += a.g(r, c);
        CHECK(rec.stats.cells == cells);
        CHECK(rec.stats.g_avg() == doctest::Approx(sum / static_cast<double>(cells)).epsilon(1e-9));
    }
}

TEST_CASE("fidelity") {
    const Tensor a = rows_of(3, 2, {1, 0, 0, 1, 5, 4});
    CHECK(fidelity(a, a) == 1.0);
    CHECK(fidelity(a, rows_of(3, 2, {0, 1, 1, 0, 4, 5})) == 0.0);
    CHECK(fidelity(a, IntTensor({3}, {0, 1, 1})) == doctest::Approx(2.0 / 3.0));
    CHECK(argmax_rows(rows_of(1, 3, {2, 2, 1})) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(fidelity(a, rows_of(2, 2, {0, 0, 0, 0})), ShapeError);
    // independent random scores over 10 classes agree about a tenth of the time
    Rng rng(9);
    Tensor x = Tensor::zeros({4000, 10}), y = Tensor::zeros({4000, 10});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    for (auto& v : y.data) v = static_cast<float>(rng.normal());
    CHECK(std::fabs(fidelity(x, y) - 0.1) < 0.05);
}

TEST_CASE("more ADC bits do not hurt on average") {
    const ModelBundle b = synth_model(1, builtin_arch("tiny-cnn"), {64});
    const Network net = build_network(b);
    SimulationConfig cfg = ideal_config(Design::Design2, 2);
    cfg.adc.kind = AdcKind::Calibrated;
    double previous = 0.0;
    for (int p : {1, 3, 6}) {
        cfg.adc.precision = p;
        const double f = fidelity(run_cim(net, b.inputs, cfg).outputs, b.labels);
        CAPTURE(p);
        CHECK(f >= previous);
        previous = f;
    }
    cfg.adc.precision = 8;
    CHECK(fidelity(run_cim(net, b.inputs, cfg).outputs, run_software_quantized(net, b.inputs, cfg)) == 1.0);
}

TEST_CASE("run_cim is reproducible by seed") {
    const ModelBundle b = synth_model(2, builtin_arch("tiny-attention"), {8});
    const Network net = build_network(b);
    SimulationConfig cfg = ideal_config(Design::Design1, 2);
    cfg.device.on_off_ratio = 10.0;
    cfg.device.sigma_cell = 0.1;
    cfg.adc.kind = AdcKind::Calibrated;
    cfg.adc.precision = 5;
    CHECK(run_cim(net, b.inputs, cfg).outputs == run_cim(net, b.inputs, cfg).outputs);
    SimulationConfig other = cfg;
    other.seed = 2;
    CHECK(run_cim(net, b.inputs, other).outputs != run_cim(net, b.inputs, cfg).outputs);
}
