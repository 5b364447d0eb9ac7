#include "cimsim/error.hpp"
#include "cimsim/hwperf.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace cimsim;
using testutil::ints;

namespace {

SimulationConfig noisy_config(Design design, int k) {
    SimulationConfig cfg;
    cfg.mapping.design = design;
    cfg.mapping.cell_bits = k;
    cfg.quant = {QuantScheme::UniformSymmetric, 4, 4};
    cfg.device.on_off_ratio = 17.0;
    cfg.device.sigma_cell = 0.05;
    cfg.adc.kind = AdcKind::Calibrated;
    cfg.adc.precision = 5;
    return cfg;
}

struct Estimated {
    HardwareReport trace, average;
};

Estimated estimate_both(const Network& net, const Tensor& inputs, const SimulationConfig& cfg) {
    const CimRun run = run_cim(net, inputs, cfg, {.keep_traces = true});
    const ChipPlan chip = build_chip(net, cfg);
    return {estimate_trace(chip, run.sites), estimate_average(chip, run.sites)};
}

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b)); }

}  // namespace

TEST_CASE("read cost of a 64x64 slot at alpha 0.5, G 1, p 5, share 8") {
    // worked by hand from the default coefficients
    const ReadCost rc = subarray_read_cost({64, 64}, 0.5, 1.0, 5, 8, CostParams{});
    CHECK(rc.energy == doctest::Approx(1.6816e-12).epsilon(1e-9));
    CHECK(rc.latency == doctest::Approx(1.15e-8).epsilon(1e-9));
}

TEST_CASE("read cost terms") {
    const CostParams c;
    const SlotMask m{64, 64};
    const ReadCost s = subarray_static_cost(m, 5, 8, c);
    CHECK(subarray_read_cost(m, 0.0, 1.0, 5, 8, c).energy == s.energy);
    const double e1 = subarray_read_cost(m, 0.5, 1.0, 5, 8, c).energy - s.energy;
    const double e2 = subarray_read_cost(m, 0.5, 2.0, 5, 8, c).energy - s.energy;
    CHECK(e2 == doctest::Approx(2.0 * e1));
    CHECK(e1 == doctest::Approx(c.e_cell * 0.5 * 64 * 64));
    CHECK(subarray_read_cost(m, 0.9, 3.0, 5, 8, c).latency == s.latency);
    CHECK_THROWS_AS(subarray_read_cost(m, 1.5, 1.0, 5, 8, c), DomainError);
    CHECK_THROWS_AS(subarray_read_cost(m, -0.1, 1.0, 5, 8, c), DomainError);
    // one more ADC bit doubles the per-level term
    const double lv = subarray_static_cost(m, 6, 8, c).energy - subarray_static_cost(m, 5, 8, c).energy;
    CHECK(lv == doctest::Approx(8.0 * (c.adc_energy_per_level * 32.0 + c.adc_energy_per_bit)));
}

TEST_CASE("two vectors on one design2 column") {
    SimulationConfig cfg;
    cfg.mapping.design = Design::Design2;
    cfg.mapping.cell_bits = 2;
    cfg.device.on_off_ratio = 4.0;  // offset 3/3 = 1
    // positive cells hold 1 + 1 and 0 + 1, negative cells 0 + 1 twice: slot means 1.5 and 1
    const auto f = testutil::linear_fixture(cfg, ints({2, 1}, {1, 0}, 2), ints({2, 2}, {1, 0, 0, 1}, 2, Signedness::Unsigned));
    const HardwareReport r = estimate_trace(f.chip, f.records);
    // one driven row per vector in cycle 0, none in cycle 1: 2 * 1 * (1.5 + 1)
    CHECK(r.sites.at(0).activity == 5.0);
    CHECK(estimate_average(f.chip, f.records).sites.at(0).activity == 5.0);
    CHECK(r.sites.at(0).conversions == 2u * 2u * 2u);
}

TEST_CASE("zero input has no cell energy") {
    SimulationConfig cfg;
    cfg.mapping.design = Design::Design3;
    Rng rng(1);
    const auto w = testutil::random_ints(rng, 32, 16, 4, Signedness::Signed);
    const auto f = testutil::linear_fixture(cfg, w, ints({4, 32}, std::vector<std::int32_t>(128, 0), 4));
    const HardwareReport t = estimate_trace(f.chip, f.records), a = estimate_average(f.chip, f.records);
    CHECK(t.sites[0].activity == 0.0);
    CHECK(a.sites[0].activity == 0.0);
    CHECK(t.energy == a.energy);
    CHECK(t.energy.subarray > 0.0);  // static periphery still counts
}

TEST_CASE("reordering input vectors leaves the estimate unchanged") {
    SimulationConfig cfg = noisy_config(Design::Design1, 2);
    Rng rng(4);
    const auto w = testutil::random_ints(rng, 200, 40, 4, Signedness::Signed);
    auto x = testutil::random_ints(rng, 30, 200, 4, Signedness::Signed);
    const auto f = testutil::linear_fixture(cfg, w, x);
    for (std::size_t v = 0; v < 15; ++v)
        std::swap_ranges(x.values.begin() + v * 200, x.values.begin() + (v + 1) * 200, x.values.begin() + (29 - v) * 200);
    const auto g = testutil::linear_fixture(cfg, w, x);
    const HardwareReport a = estimate_trace(f.chip, f.records), b = estimate_trace(g.chip, g.records);
    CHECK(a.latency == b.latency);
    CHECK(a.area == b.area);
    CHECK(a.energy.total() == doctest::Approx(b.energy.total()).epsilon(1e-12));
}

TEST_CASE("uniform-activity fixture: trace and average agree exactly") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto f = testutil::uniform_activity_fixture(seed);
        CHECK(f.records[0].stats.alpha_avg() == 0.5);
        const HardwareReport t = estimate_trace(f.chip, f.records), a = estimate_average(f.chip, f.records);
        CHECK(t.sites[0].activity == a.sites[0].activity);
        CHECK(t.energy == a.energy);
        CHECK(t.latency == a.latency);
    }
}

TEST_CASE("uniform-conductance fixture: trace and average agree exactly") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto f = testutil::uniform_conductance_fixture(seed);
        CHECK(f.records[0].stats.g_avg() == 9.0);
        const HardwareReport t = estimate_trace(f.chip, f.records), a = estimate_average(f.chip, f.records);
        CHECK(t.sites[0].activity == a.sites[0].activity);
        CHECK(t.energy == a.energy);
    }
}

TEST_CASE("modes share latency and area, and energy agrees closely") {
    for (const auto& arch : builtin_arch_names()) {
        const ModelBundle b = synth_model(3, builtin_arch(arch), {32});
        const Network net = build_network(b);
        const Estimated e = estimate_both(net, b.inputs, noisy_config(Design::Design3, 2));
        CAPTURE(arch);
        CHECK(e.trace.latency == e.average.latency);
        CHECK(e.trace.area == e.average.area);
        CHECK(rel(e.trace.energy.total(), e.average.energy.total()) < 0.05);
        CHECK(e.trace.cost_calls > e.average.cost_calls);
        CHECK(e.trace.mode == EstimateMode::Trace);
    }
}

TEST_CASE("trace mode needs traces") {
    const ModelBundle b = synth_model(3, builtin_arch("tiny-cnn"), {4});
    const Network net = build_network(b);
    const SimulationConfig cfg = noisy_config(Design::Design2, 2);
    const CimRun run = run_cim(net, b.inputs, cfg);
    CHECK_THROWS_AS(estimate_trace(build_chip(net, cfg), run.sites), DomainError);
    CHECK_NOTHROW(estimate_average(build_chip(net, cfg), run.sites));
}

TEST_CASE("tile kinds and stage composition on tiny-attention") {
    const ModelBundle b = synth_model(2, builtin_arch("tiny-attention"), {8});
    const Network net = build_network(b);
    SimulationConfig cfg = noisy_config(Design::Design2, 2);
    const ChipPlan chip = build_chip(net, cfg);
    CHECK(chip.sram_tiles > 0);
    CHECK(chip.envm_tiles > 0);
    const Estimated e = estimate_both(net, b.inputs, cfg);
    for (const auto& s : e.trace.sites)
        CHECK(s.tile_kind == (s.kind == SiteKind::Dmm ? DeviceKind::Sram : DeviceKind::ENvm));
    std::vector<std::string> names;
    for (const auto& s : e.trace.stages) names.push_back(s.stage);
    CHECK(names == std::vector<std::string>{"qkv", "stage2", "out_proj", "ffn", "linear"});

    cfg.arch.overlap_v_write = false;
    const Estimated serial = estimate_both(net, b.inputs, cfg);
    const double overlap_s2 = e.trace.stages[1].latency, serial_s2 = serial.trace.stages[1].latency;
    CHECK(serial_s2 > overlap_s2);
    CHECK(serial.trace.latency.total() - e.trace.latency.total() == doctest::Approx(serial_s2 - overlap_s2));
    CHECK(serial.trace.stages[0].latency == e.trace.stages[0].latency);
    CHECK(serial.trace.energy == e.trace.energy);
}

TEST_CASE("design2 needs twice the subarrays of design3 when slots hold the same weights") {
    // k = N = 4 puts one column per weight; every layer is at most 127 columns wide
    const ModelBundle b = synth_model(1, builtin_arch("tiny-cnn"), {4});
    const Network net = build_network(b);
    const ChipPlan d2 = build_chip(net, noisy_config(Design::Design2, 4));
    const ChipPlan d3 = build_chip(net, noisy_config(Design::Design3, 4));
    for (std::size_t s = 0; s < d2.sites.size(); ++s)
        CHECK(d2.sites[s].plan.subarray_count() == 2 * d3.sites[s].plan.subarray_count());
}

TEST_CASE("summary metrics") {
    const Metrics m = summarize(1e12, 1.0, 0.5, 4.0);
    CHECK(m.tops == doctest::Approx(2.0));
    CHECK(m.tops_per_w == doctest::Approx(4.0));
    CHECK(m.tops_per_mm2 == doctest::Approx(0.5));
    CHECK_THROWS_AS(summarize(1.0, 0.0, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(summarize(1.0, 1.0, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(summarize(1.0, 1.0, 1.0, 0.0), DomainError);
}

TEST_CASE("reports round trip through JSON and render as text") {
    const ModelBundle b = synth_model(1, builtin_arch("tiny-attention"), {4});
    const Network net = build_network(b);
    const HardwareReport r = estimate_both(net, b.inputs, noisy_config(Design::Design1, 2)).average;
    const json j = to_json(r);
    const HardwareReport back = hardware_report_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.latency == r.latency);
    CHECK(back.sites.size() == r.sites.size());
    json wrong = j;
    wrong["schema_version"] = 2;
    CHECK_THROWS_AS(hardware_report_from_json(wrong), FormatError);
    json broken = j;
    broken.erase("energy_j");
    CHECK_THROWS_AS(hardware_report_from_json(broken), FormatError);
    CHECK_THROWS_AS(hardware_report_from_json(json::array()), FormatError);

    const std::string text = render_text(r);
    CHECK(text.find("TOPS/W") != std::string::npos);
    std::istringstream in(text);
    std::string line;
    double sums[3] = {0, 0, 0};
    int rows = 0;
    while (std::getline(in, line)) {
        for (const char* cat : {"subarray", "buffer", "interconnect", "digital"}) {
            if (line.rfind(cat, 0) != 0) continue;
            std::istringstream ls(line.substr(std::string(cat).size()));
            double v;
            char pct;
            for (double& s : sums) {
                ls >> v >> pct;
                s += v;
            }
            ++rows;
        }
    }
    CHECK(rows == 4);
    for (double s : sums) CHECK(s == doctest::Approx(100.0).epsilon(1e-3));
}
