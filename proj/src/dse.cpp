#include "cimsim/dse.hpp"

#include "cimsim/error.hpp"
#include "cimsim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cimsim {
namespace {

constexpr std::uint64_t kVerifyOffset = 1000;

bool stochastic(const SimulationConfig& cfg) {
    return cfg.device.sigma_cell > 0.0 || cfg.arch.dmm_device.sigma_cell > 0.0;
}

json describe(const SimulationConfig& c) {
    return json{{"scheme", to_string(c.quant.scheme)},
                {"weight_bits", c.quant.weight_bits},
                {"input_bits", c.quant.input_bits},
                {"design", to_string(c.mapping.design)},
                {"cell_bits", c.mapping.cell_bits},
                {"adc_kind", to_string(c.adc.kind)},
                {"adc_precision", c.adc.precision},
                {"device", c.device.name},
                {"on_off_ratio", std::isinf(c.device.on_off_ratio) ? json("inf") : json(c.device.on_off_ratio)}};
}

json hardware_json(const HardwareSummary& h) {
    return json{{"tops", h.metrics.tops},       {"tops_per_w", h.metrics.tops_per_w},
                {"tops_per_mm2", h.metrics.tops_per_mm2}, {"area_mm2", h.area_mm2},
                {"energy_j", h.energy_j},       {"latency_s", h.latency_s}};
}

template <class T, class F>
std::vector<T> list_of(const json& j, const std::string& key, F parse) {
    if (!j.is_array() || j.empty()) throw ConfigError(ConfigErrorKind::Schema, key, "must be a non-empty array");
    std::vector<T> out;
    for (const auto& e : j) out.push_back(parse(e));
    return out;
}

}  // namespace

void SearchSpace::check() const {
    auto range = [](const std::string& key, const std::string& msg) { throw ConfigError(ConfigErrorKind::Range, key, msg); };
    if (schemes.empty()) range("schemes", "must not be empty");
    if (designs.empty()) range("designs", "must not be empty");
    if (cell_bits.empty()) range("cell_bits", "must not be empty");
    if (min_bits < 2 || max_bits > 8 || min_bits > max_bits) range("bits", "must satisfy 2 <= min <= max <= 8");
    if (adc_min < 1 || adc_max > 24 || adc_min > adc_max) range("adc_precision", "must satisfy 1 <= min <= max <= 24");
    for (int k : cell_bits)
        if (k < 1 || k > 4) range("cell_bits", "entries must lie in 1..4");
    if (!(tolerance > 0.0 && tolerance < 1.0)) range("tolerance", "must lie in (0, 1)");
    if (hardware_seeds == 0) range("hardware_seeds", "must be positive");
}

json to_json(const SearchSpace& s) {
    json schemes = json::array(), designs = json::array(), devices = json::array();
    for (auto q : s.schemes) schemes.push_back(to_string(q));
    for (auto d : s.designs) designs.push_back(to_string(d));
    for (const auto& d : s.devices) devices.push_back(to_json(d));
    return json{{"schemes", schemes},
                {"bits", {{"min", s.min_bits}, {"max", s.max_bits}}},
                {"designs", designs},
                {"cell_bits", s.cell_bits},
                {"adc_precision", {{"min", s.adc_min}, {"max", s.adc_max}}},
                {"devices", devices},
                {"tolerance", s.tolerance},
                {"hardware_seeds", s.hardware_seeds}};
}

SearchSpace search_space_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError(ConfigErrorKind::Schema, "", "search space must be an object");
    SearchSpace s;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "schemes") {
                s.schemes = list_of<QuantScheme>(value, key, [](const json& e) { return parse_quant_scheme(e.get<std::string>()); });
            } else if (key == "designs") {
                s.designs = list_of<Design>(value, key, [](const json& e) { return parse_design(e.get<std::string>()); });
            } else if (key == "cell_bits") {
                s.cell_bits = list_of<int>(value, key, [](const json& e) { return e.get<int>(); });
            } else if (key == "bits") {
                s.min_bits = value.at("min").get<int>();
                s.max_bits = value.at("max").get<int>();
            } else if (key == "adc_precision") {
                s.adc_min = value.at("min").get<int>();
                s.adc_max = value.at("max").get<int>();
            } else if (key == "devices") {
                s.devices = list_of<DeviceModel>(value, key, [](const json& e) { return device_from_json(e, "devices"); });
            } else if (key == "tolerance") {
                s.tolerance = value.get<double>();
            } else if (key == "hardware_seeds") {
                s.hardware_seeds = value.get<std::size_t>();
            } else {
                throw ConfigError(ConfigErrorKind::Schema, key, "unknown key");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(ConfigErrorKind::Schema, "", std::string("search space: ") + e.what());
    }
    s.check();
    return s;
}

double FidelityResult::standard_error() const {
    if (per_seed.size() < 2) return 0.0;
    double var = 0.0;
    for (double f : per_seed) var += (f - mean) * (f - mean);
    var /= static_cast<double>(per_seed.size() - 1);
    return std::sqrt(var / static_cast<double>(per_seed.size()));
}

SimulationConfig ideal_hardware(SimulationConfig cfg) {
    cfg.device.on_off_ratio = kInfiniteRatio;
    cfg.device.sigma_cell = 0.0;
    cfg.arch.dmm_device.on_off_ratio = kInfiniteRatio;
    cfg.arch.dmm_device.sigma_cell = 0.0;
    cfg.adc.kind = AdcKind::Ideal;
    return cfg;
}

FidelityResult cim_fidelity(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle,
                            std::size_t seeds, std::uint64_t offset) {
    const std::size_t n = stochastic(cfg) ? std::max<std::size_t>(1, seeds) : 1;
    FidelityResult r;
    for (std::size_t i = 0; i < n; ++i) {
        SimulationConfig c = cfg;
        c.seed = derive_seed(cfg.seed, offset + i);
        const CimRun run = run_cim(net, bundle.inputs, c);
        r.per_seed.push_back(fidelity(run.outputs, bundle.labels));
    }
    double sum = 0.0;
    for (double f : r.per_seed) sum += f;
    r.mean = sum / static_cast<double>(n);
    return r;
}

double software_fidelity(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle) {
    return fidelity(run_software_quantized(net, bundle.inputs, cfg), bundle.labels);
}

HardwareSummary evaluate_hardware(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle) {
    const CimRun run = run_cim(net, bundle.inputs, cfg);
    const HardwareReport rep = estimate_average(build_chip(net, cfg), run.sites);
    HardwareSummary h;
    h.metrics = summarize(rep);
    h.area_mm2 = rep.area.total();
    h.energy_j = rep.energy.total();
    h.latency_s = rep.latency.total();
    return h;
}

bool better(const HardwareSummary& a, const HardwareSummary& b) {
    if (a.metrics.tops_per_w != b.metrics.tops_per_w) return a.metrics.tops_per_w > b.metrics.tops_per_w;
    if (a.area_mm2 != b.area_mm2) return a.area_mm2 < b.area_mm2;
    return a.metrics.tops > b.metrics.tops;
}

std::optional<int> minimal_adc_precision(const SimulationConfig& point, const Network& net, const ModelBundle& bundle,
                                         double baseline, double tolerance, int p_min, int p_max, std::size_t seeds) {
    for (int p = p_min; p <= p_max; ++p) {
        SimulationConfig c = point;
        c.adc.precision = p;
        if (cim_fidelity(c, net, bundle, seeds).mean >= baseline - tolerance) return p;
    }
    return std::nullopt;
}

DSEResult explore(const SearchSpace& space, const ModelBundle& bundle, const SimulationConfig& base) {
    space.check();
    const Network net = build_network(bundle);
    DSEResult res;
    res.baseline = fidelity(run_reference(net, bundle.inputs), bundle.labels);
    const double floor_a = res.baseline - space.tolerance;
    auto log = [&res](std::string stage, const SimulationConfig& c, double fid, std::vector<double> seeds, bool ok,
                      std::optional<HardwareSummary> hw, std::string note = {}) {
        res.log.push_back({std::move(stage), describe(c), fid, std::move(seeds), ok, hw, std::move(note)});
    };

    // Stage A: quantization scheme and the smallest tied precision N = M
    std::optional<StageChoice> best_a;
    for (auto scheme : space.schemes) {
        bool found = false;
        for (int bits = space.min_bits; bits <= space.max_bits && !found; ++bits) {
            SimulationConfig c = base;
            c.quant = {scheme, bits, bits};
            const double f = software_fidelity(c, net, bundle);
            found = f >= floor_a;
            if (!found) {
                log("A", c, f, {f}, false, std::nullopt);
                continue;
            }
            // hardware at the unified base configuration; cell precision cannot exceed N
            c.mapping.cell_bits = std::min(c.mapping.cell_bits, bits);
            const HardwareSummary hw = evaluate_hardware(c, net, bundle);
            log("A", c, f, {f}, true, hw);
            if (!best_a || better(hw, best_a->hardware)) best_a = StageChoice{c, f, hw};
        }
    }
    if (!best_a) throw DomainError("stage A: no quantization setting meets the fidelity tolerance");
    res.stage_a = *best_a;
    res.quant_baseline = res.stage_a.fidelity;
    const double floor_q = res.quant_baseline - space.tolerance;
    const int n_bits = res.stage_a.cfg.quant.weight_bits;

    // Stage B: design x cell precision with an infinite on/off ratio, minimal ADC precision each
    std::optional<StageChoice> best_b;
    for (auto design : space.designs) {
        for (int k : space.cell_bits) {
            SimulationConfig c = res.stage_a.cfg;
            c.mapping.design = design;
            c.mapping.cell_bits = k;
            if (c.adc.kind == AdcKind::Ideal || c.adc.kind == AdcKind::Custom) c.adc.kind = AdcKind::Calibrated;
            if (k > n_bits || k > base.device.cell_bits_max) {
                log("B", c, 0.0, {}, false, std::nullopt, "cell precision not applicable");
                continue;
            }
            SimulationConfig probe = c;
            probe.device.on_off_ratio = kInfiniteRatio;
            const auto p = minimal_adc_precision(probe, net, bundle, res.quant_baseline, space.tolerance, space.adc_min,
                                                 space.adc_max, space.hardware_seeds);
            if (!p) {
                log("B", probe, 0.0, {}, false, std::nullopt, "no ADC precision in range meets the tolerance");
                continue;
            }
            probe.adc.precision = *p;
            c.adc.precision = *p;
            const FidelityResult f = cim_fidelity(probe, net, bundle, space.hardware_seeds);
            const HardwareSummary hw = evaluate_hardware(c, net, bundle);
            log("B", probe, f.mean, f.per_seed, true, hw, "minimal ADC precision " + std::to_string(*p));
            if (!best_b || better(hw, best_b->hardware)) best_b = StageChoice{probe, f.mean, hw};
        }
    }
    if (!best_b) throw DomainError("stage B: no design and cell precision meets the fidelity tolerance");
    res.stage_b = *best_b;

    // Stage C: devices, lowering the cell precision until fidelity holds
    const std::vector<DeviceModel> devices = space.devices.empty() ? builtin_devices() : space.devices;
    std::vector<int> ks = space.cell_bits;
    std::sort(ks.rbegin(), ks.rend());
    std::optional<StageChoice> best_c;
    for (const auto& dev : devices) {
        bool done = false;
        for (int k : ks) {
            if (done || k > res.stage_b.cfg.mapping.cell_bits || k > dev.cell_bits_max) continue;
            SimulationConfig c = res.stage_b.cfg;
            c.device = dev;
            c.mapping.cell_bits = k;
            const FidelityResult f = cim_fidelity(c, net, bundle, space.hardware_seeds);
            if (f.mean < floor_q) {
                log("C", c, f.mean, f.per_seed, false, std::nullopt);
                continue;
            }
            const HardwareSummary hw = evaluate_hardware(c, net, bundle);
            log("C", c, f.mean, f.per_seed, true, hw);
            if (!best_c || better(hw, best_c->hardware)) best_c = StageChoice{c, f.mean, hw};
            done = true;
        }
    }
    if (!best_c) throw DomainError("stage C: no device meets the fidelity tolerance");
    res.stage_c = *best_c;
    res.final_cfg = res.stage_c.cfg;
    res.final_fidelity = res.stage_c.fidelity;

    const FidelityResult check = cim_fidelity(res.final_cfg, net, bundle, space.hardware_seeds, kVerifyOffset);
    res.reverified_fidelity = check.mean;
    res.reverified_stderr = check.standard_error();
    res.reverified = check.mean >= floor_q - 2.0 * check.standard_error();
    log("verify", res.final_cfg, check.mean, check.per_seed, res.reverified, std::nullopt, "fresh seeds");
    return res;
}

json to_json(const EvalEntry& e) {
    json j{{"stage", e.stage}, {"point", e.point}, {"fidelity", e.fidelity}, {"per_seed", e.per_seed},
           {"feasible", e.feasible}};
    if (e.hardware) j["hardware"] = hardware_json(*e.hardware);
    if (!e.note.empty()) j["note"] = e.note;
    return j;
}

json to_json(const DSEResult& r) {
    auto choice = [](const StageChoice& c) {
        return json{{"point", describe(c.cfg)}, {"fidelity", c.fidelity}, {"hardware", hardware_json(c.hardware)}};
    };
    json log = json::array();
    for (const auto& e : r.log) log.push_back(to_json(e));
    return json{{"baseline", r.baseline},
                {"quant_baseline", r.quant_baseline},
                {"stage_a", choice(r.stage_a)},
                {"stage_b", choice(r.stage_b)},
                {"stage_c", choice(r.stage_c)},
                {"final", {{"config", to_json(r.final_cfg)},
                           {"fidelity", r.final_fidelity},
                           {"reverified_fidelity", r.reverified_fidelity},
                           {"reverified_stderr", r.reverified_stderr},
                           {"reverified", r.reverified}}},
                {"log", log}};
}

std::string render_dse_tables(const DSEResult& r) {
    std::ostringstream out;
    char line[200];
    for (const char* stage : {"A", "B", "C", "verify"}) {
        out << "stage " << stage << '\n';
        std::snprintf(line, sizeof line, "  %-20s %-8s %2s %2s %3s %-10s %8s %10s %10s\n", "scheme", "design", "N", "k",
                      "p", "device", "fidelity", "TOPS/W", "area mm2");
        out << line;
        for (const auto& e : r.log) {
            if (e.stage != stage) continue;
            const auto& p = e.point;
            char eff[16] = "-", area[16] = "-";
            if (e.hardware) {
                std::snprintf(eff, sizeof eff, "%.4g", e.hardware->metrics.tops_per_w);
                std::snprintf(area, sizeof area, "%.4g", e.hardware->area_mm2);
            }
            std::snprintf(line, sizeof line, "  %-20s %-8s %2d %2d %3d %-10s %8.4f %10s %10s%s\n",
                          p["scheme"].get<std::string>().c_str(), p["design"].get<std::string>().c_str(),
                          p["weight_bits"].get<int>(), p["cell_bits"].get<int>(), p["adc_precision"].get<int>(),
                          p["device"].get<std::string>().c_str(), e.fidelity, eff, area,
                          e.feasible ? "" : "  (infeasible)");
            out << line;
        }
    }
    return out.str();
}

}  // namespace cimsim
