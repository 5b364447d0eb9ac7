#include "cimsim/dse.hpp"
#include "cimsim/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace cimsim;

namespace {

struct Fixture {
    ModelBundle bundle;
    Network net;
};

const Fixture& cnn() {
    static const Fixture f = [] {
        ModelBundle b = synth_model(1, builtin_arch("tiny-cnn"), {64});
        Network n = build_network(b);
        return Fixture{std::move(b), std::move(n)};
    }();
    return f;
}

SimulationConfig point(Design design, int k, double ratio, double sigma) {
    SimulationConfig cfg;
    cfg.quant = {QuantScheme::UniformSymmetric, 6, 6};
    cfg.mapping.design = design;
    cfg.mapping.cell_bits = k;
    cfg.device.on_off_ratio = ratio;
    cfg.device.sigma_cell = sigma;
    cfg.adc.kind = AdcKind::Calibrated;
    return cfg;
}

HardwareSummary summary(double tops_per_w, double area, double tops) {
    HardwareSummary h;
    h.metrics.tops_per_w = tops_per_w;
    h.metrics.tops = tops;
    h.area_mm2 = area;
    return h;
}

}  // namespace

TEST_CASE("a singleton space returns the direct evaluation of its only point") {
    const auto& f = cnn();
    SearchSpace s;
    s.schemes = {QuantScheme::UniformSymmetric};
    s.min_bits = s.max_bits = 8;
    s.designs = {Design::Design3};
    s.cell_bits = {2};
    s.adc_min = 1;
    s.adc_max = 10;
    DeviceModel dev = *find_builtin_device("RRAM-150");
    s.devices = {dev};
    s.tolerance = 0.2;
    s.hardware_seeds = 1;
    const DSEResult r = explore(s, f.bundle, SimulationConfig{});

    const SimulationConfig& c = r.final_cfg;
    CHECK(c.quant == QuantConfig{QuantScheme::UniformSymmetric, 8, 8});
    CHECK(c.mapping.design == Design::Design3);
    CHECK(c.mapping.cell_bits == 2);
    CHECK(c.device == dev);
    CHECK(r.final_fidelity == cim_fidelity(c, f.net, f.bundle, 1).mean);
    const HardwareSummary direct = evaluate_hardware(c, f.net, f.bundle);
    CHECK(r.stage_c.hardware.metrics.tops_per_w == direct.metrics.tops_per_w);
    CHECK(r.stage_c.hardware.area_mm2 == direct.area_mm2);
    CHECK(r.quant_baseline == software_fidelity(r.stage_a.cfg, f.net, f.bundle));
    // the stage B precision is the smallest one in range that meets the tolerance
    SimulationConfig probe = c;
    probe.device.on_off_ratio = kInfiniteRatio;
    CHECK(minimal_adc_precision(probe, f.net, f.bundle, r.quant_baseline, s.tolerance, 1, 10, 1) == c.adc.precision);
    CHECK_FALSE(r.log.empty());
    CHECK(r.log.back().stage == "verify");
    CHECK(render_dse_tables(r).find("verify") != std::string::npos);
}

TEST_CASE("tolerance 1 accepts the lowest precision") {
    const auto& f = cnn();
    const auto p = minimal_adc_precision(point(Design::Design2, 2, 17.0, 0.0), f.net, f.bundle, 1.0, 1.0, 3, 9, 1);
    CHECK(p == 3);
}

TEST_CASE("minimal precision does not grow with the tolerance") {
    const auto& f = cnn();
    const SimulationConfig cfg = point(Design::Design1, 2, 150.0, 0.0);
    const double base = software_fidelity(cfg, f.net, f.bundle);
    int previous = 100;
    for (double tol : {0.0, 0.02, 0.05, 0.1, 0.3}) {
        const auto p = minimal_adc_precision(cfg, f.net, f.bundle, base, tol, 1, 10, 1);
        const int value = p.value_or(99);
        CAPTURE(tol);
        CHECK(value <= previous);
        previous = value;
    }
}

TEST_CASE("ideal hardware reaches software fidelity at 8 ADC bits") {
    const auto& f = cnn();
    for (Design design : {Design::Design1, Design::Design2, Design::Design3}) {
        SimulationConfig cfg = point(design, 2, kInfiniteRatio, 0.0);
        cfg.quant = {QuantScheme::UniformSymmetric, 4, 4};
        cfg.adc.precision = 8;
        CHECK(cim_fidelity(cfg, f.net, f.bundle, 3).mean == software_fidelity(cfg, f.net, f.bundle));
        CHECK(cim_fidelity(ideal_hardware(cfg), f.net, f.bundle, 1).mean == software_fidelity(cfg, f.net, f.bundle));
    }
}

TEST_CASE("seed averaging only when something is random") {
    const auto& f = cnn();
    CHECK(cim_fidelity(point(Design::Design2, 2, 150.0, 0.0), f.net, f.bundle, 4).per_seed.size() == 1);
    const FidelityResult r = cim_fidelity(point(Design::Design2, 2, 150.0, 0.3), f.net, f.bundle, 4);
    CHECK(r.per_seed.size() == 4);
    CHECK(r.standard_error() >= 0.0);
    FidelityResult fixed{0.5, {0.4, 0.6}};
    CHECK(fixed.standard_error() == doctest::Approx(0.1));
}

TEST_CASE("search space parsing") {
    SearchSpace s;
    s.devices = {*find_builtin_device("FeFET-100")};
    s.cell_bits = {1, 2};
    const SearchSpace back = search_space_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));

    auto key_of = [](const json& j) {
        try {
            search_space_from_json(j);
        } catch (const ConfigError& e) {
            return e.key();
        }
        return std::string("<none>");
    };
    CHECK(key_of(json{{"colours", 3}}) == "colours");
    CHECK(key_of(json{{"bits", {{"min", 6}, {"max", 4}}}}) == "bits");
    CHECK(key_of(json{{"tolerance", 0.0}}) == "tolerance");
    CHECK(key_of(json{{"designs", json::array()}}) == "designs");
    CHECK(key_of(json{{"cell_bits", {8}}}) == "cell_bits");
    CHECK(key_of(json{{"adc_precision", {{"min", 0}, {"max", 4}}}}) == "adc_precision");
    CHECK(key_of(json{{"hardware_seeds", 0}}) == "hardware_seeds");
    const auto shipped = testutil::slurp(std::filesystem::path(CIMSIM_SOURCE_DIR) / "configs" / "space_small.json");
    CHECK_NOTHROW(search_space_from_json(json::parse(shipped)));
}

TEST_CASE("preference order") {
    CHECK(better(summary(2.0, 9.0, 1.0), summary(1.0, 1.0, 9.0)));
    CHECK(better(summary(1.0, 1.0, 1.0), summary(1.0, 2.0, 9.0)));
    CHECK(better(summary(1.0, 1.0, 2.0), summary(1.0, 1.0, 1.0)));
    CHECK_FALSE(better(summary(1.0, 1.0, 1.0), summary(1.0, 1.0, 1.0)));
}

TEST_CASE("an infeasible space names the failing stage") {
    const auto& f = cnn();
    SearchSpace s;
    s.min_bits = s.max_bits = 2;
    s.tolerance = 1e-6;
    try {
        explore(s, f.bundle, SimulationConfig{});
        FAIL("expected stage A to fail");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("stage A") != std::string::npos);
    }
}
