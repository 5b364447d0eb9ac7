#include "cimsim/hwperf.hpp"

#include "cimsim/error.hpp"
#include "cimsim/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cimsim {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

double adc_levels(int p) { return std::ldexp(1.0, p); }

double subarray_area(std::size_t rows, std::size_t cols, DeviceKind kind, int p, std::size_t share,
                     const CostParams& c) {
    const double cell = kind == DeviceKind::Sram ? c.cell_area_sram : c.cell_area_envm;
    const double adcs = static_cast<double>(cols / share);
    return static_cast<double>(rows * cols) * cell +
           adcs * (c.adc_area_per_level * adc_levels(p) + c.adc_area_per_bit * p + c.shift_add_area) +
           static_cast<double>(rows) * c.wl_driver_area;
}

double site_subarray_area(const SitePlacement& sp, const ChipPlan& chip) {
    const bool dmm = sp.site.kind == SiteKind::Dmm;
    return static_cast<double>(sp.plan.slots.size()) *
           subarray_area(dmm ? chip.dmm_subarray_rows : chip.subarray_rows,
                         dmm ? chip.dmm_subarray_cols : chip.subarray_cols, sp.device.kind, sp.adc_precision,
                         chip.adc_share, chip.cost);
}

struct ChipArea {
    Breakdown total;  // m^2
    std::vector<Breakdown> sites;
};

ChipArea chip_area(const ChipPlan& chip) {
    const auto& c = chip.cost;
    ChipArea out;
    for (const auto& sp : chip.sites) {
        Breakdown a;
        const auto tiles = static_cast<double>(sp.tiles);
        a.subarray = site_subarray_area(sp, chip);
        a.buffer = tiles * c.tile_buffer_bits * c.buffer_area_per_bit;
        a.interconnect = tiles * c.ic_area_per_tile;
        a.digital = tiles * c.digital_area_per_tile;
        out.sites.push_back(a);
        out.total += a;
    }
    out.total.buffer += chip.buffer_bits * c.buffer_area_per_bit;
    for (const auto& l : chip.layers)
        if (l.desc.kind == LayerKind::Attention) out.total.digital += c.softmax_unit_area;
    return out;
}

// Counts that drive every data-independent cost of one site.
struct SiteCounts {
    std::uint64_t vectors = 0;
    int cycles = 0;
    std::size_t invocations = 0;
};

struct SiteCost {
    Breakdown latency;       // compute path, all samples
    Breakdown write_latency; // SRAM operand writes, all samples
    Breakdown energy;
    std::uint64_t conversions = 0;
};

SiteCost site_cost(const SitePlacement& sp, const ChipPlan& chip, const SiteCounts& n, double activity,
                   double span_mm) {
    const auto& c = chip.cost;
    SiteCost out;
    const double reads = static_cast<double>(n.vectors) * n.cycles;
    double static_energy = 0.0;
    double cycle_latency = 0.0;
    std::uint64_t conv_per_cycle = 0;
    for (const auto& slot : sp.plan.slots) {
        const ReadCost rc = subarray_static_cost(slot.mask, sp.adc_precision, chip.adc_share, c);
        static_energy += rc.energy;
        cycle_latency = std::max(cycle_latency, rc.latency);
        conv_per_cycle += ceil_div(slot.mask.used_cols, chip.adc_share);
    }
    out.conversions = n.vectors * static_cast<std::uint64_t>(n.cycles) * conv_per_cycle;
    out.energy.subarray = static_energy * reads + c.e_cell * activity;
    out.latency.subarray = cycle_latency * reads;

    const auto& s = sp.site;
    double bits = static_cast<double>(n.vectors) * static_cast<double>(s.rows + s.cols) * chip.input_bits;
    if (s.kind == SiteKind::Dmm) {
        double cells = 0.0;
        std::size_t rows = 0;
        for (const auto& slot : sp.plan.slots) {
            cells += static_cast<double>(slot.mask.used_rows * slot.mask.used_cols);
            rows = std::max(rows, slot.mask.used_rows);
        }
        const auto inv = static_cast<double>(n.invocations);
        out.energy.subarray += inv * cells * sp.device.write_energy;
        out.write_latency.subarray = inv * static_cast<double>(rows) * sp.device.write_latency;
        const double wbits = inv * static_cast<double>(s.rows * s.cols) * sp.plan.weight_bits;
        out.energy.buffer += wbits * c.e_buffer_bit;
        out.energy.interconnect += wbits * c.e_ic_bit_mm * span_mm;
        out.write_latency.buffer = wbits / c.buffer_bus_bits * c.t_buffer_cycle;
        out.write_latency.interconnect = wbits / c.ic_bus_bits * c.t_ic_mm * span_mm;
    }
    out.energy.buffer += bits * c.e_buffer_bit;
    out.energy.interconnect += bits * c.e_ic_bit_mm * span_mm;
    out.latency.buffer = bits / c.buffer_bus_bits * c.t_buffer_cycle;
    out.latency.interconnect = bits / c.ic_bus_bits * c.t_ic_mm * span_mm;
    return out;
}

Breakdown digital_cost(double ops, const CostParams& c, bool latency) {
    Breakdown b;
    b.digital = latency ? std::ceil(ops / c.digital_lanes) * c.t_digital_op : ops * c.e_digital_op;
    return b;
}

std::size_t samples_of(const SiteRecord& r) {
    if (r.site.kind == SiteKind::Dmm) return r.stats.invocations;
    return r.site.vectors_per_sample ? static_cast<std::size_t>(r.stats.vectors / r.site.vectors_per_sample) : 0;
}

// Per-site activity and call counts from one estimation mode.
struct Activity {
    double value = 0.0;
    std::uint64_t calls = 0;
    SiteCounts counts;
};

Activity trace_activity(const SitePlacement& sp, const SiteRecord& rec) {
    if (rec.traces.empty() || rec.traces.size() != rec.stats.invocations)
        throw DomainError("missing trace for site " + sp.site.name);
    Activity a;
    CompensatedSum sum;
    const auto& slots = sp.plan.slots;
    for (const auto& inv : rec.traces) {
        const MacTrace& t = inv.trace;
        if (inv.slot_g_mean.size() != slots.size() || t.bands != sp.plan.bands)
            throw DomainError("trace does not match the plan of site " + sp.site.name);
        for (std::size_t v = 0; v < t.vectors; ++v)
            for (int c = 0; c < t.cycles; ++c)
                for (std::size_t s = 0; s < slots.size(); ++s) {
                    // alpha * usedRows is the driven row count of the slot's band
                    const double active = t.active_rows(v, c, slots[s].band);
                    sum.add(active * static_cast<double>(slots[s].mask.used_cols) * inv.slot_g_mean[s]);
                    ++a.calls;
                }
        a.counts.vectors += t.vectors;
        a.counts.cycles = t.cycles;
        ++a.counts.invocations;
    }
    a.value = sum.value();
    return a;
}

Activity average_activity(const SitePlacement& sp, const SiteRecord& rec) {
    const LayerStats& st = rec.stats;
    if (st.invocations == 0 || st.masks.empty()) throw DomainError("missing stats for site " + sp.site.name);
    Activity a;
    CompensatedSum sum;
    const double alpha = st.alpha_avg(), g = st.g_avg(), n = static_cast<double>(st.vectors);
    for (const auto& [mask, mult] : st.masks)
        for (int c = 0; c < st.cycles; ++c) {
            sum.add(alpha * static_cast<double>(mask.used_rows) * static_cast<double>(mask.used_cols) * g *
                    static_cast<double>(mult) * n);
            ++a.calls;
        }
    a.value = sum.value();
    a.counts = {st.vectors, st.cycles, st.invocations};
    return a;
}

HardwareReport assemble_report(const ChipPlan& chip, const std::vector<SiteRecord>& records, EstimateMode mode) {
    if (records.size() != chip.sites.size()) throw DomainError("site records do not match the chip plan");
    HardwareReport rep;
    rep.mode = mode;
    rep.macs_per_inference = chip.macs_per_sample;
    const ChipArea area = chip_area(chip);
    rep.area = area.total.scaled(1e6);
    const double span_mm = std::sqrt(rep.area.total());

    const std::size_t n_sites = chip.sites.size();
    std::vector<Activity> act(n_sites);
    std::vector<std::string> errors(n_sites);
    const auto count = static_cast<std::int64_t>(n_sites);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        const auto si = static_cast<std::size_t>(i);
        try {
            act[si] = mode == EstimateMode::Trace ? trace_activity(chip.sites[si], records[si])
                                                  : average_activity(chip.sites[si], records[si]);
        } catch (const std::exception& e) {
            errors[si] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw DomainError(e);

    rep.samples = n_sites ? samples_of(records[0]) : 0;
    if (rep.samples == 0) throw DomainError("records cover no samples");
    const double samples = static_cast<double>(rep.samples);

    std::vector<SiteCost> costs(n_sites);
    Breakdown energy;
    for (std::size_t i = 0; i < n_sites; ++i) {
        if (samples_of(records[i]) != rep.samples) throw DomainError("sites cover different sample counts");
        costs[i] = site_cost(chip.sites[i], chip, act[i].counts, act[i].value, span_mm);
        energy += costs[i].energy;
        SiteReport sr;
        sr.name = chip.sites[i].site.name;
        sr.kind = chip.sites[i].site.kind;
        sr.tile_kind = chip.sites[i].device.kind;
        sr.subarrays = chip.sites[i].plan.slots.size();
        sr.tiles = chip.sites[i].tiles;
        sr.activity = act[i].value;
        sr.conversions = costs[i].conversions;
        sr.cost_calls = act[i].calls;
        sr.area = area.sites[i].scaled(1e6);
        sr.latency = (costs[i].latency + costs[i].write_latency).scaled(1.0 / samples);
        sr.energy = costs[i].energy.scaled(1.0 / samples);
        rep.cost_calls += act[i].calls;
        rep.sites.push_back(std::move(sr));
    }

    // latency composition, layer by layer
    Breakdown latency;
    const auto& c = chip.cost;
    for (const auto& layer : chip.layers) {
        const double s = samples;
        auto compute = [&](std::size_t site) { return costs[site].latency; };
        if (layer.desc.kind != LayerKind::Attention) {
            Breakdown l = compute(layer.stages[0].sites[0]) +
                          digital_cost(static_cast<double>(layer.digital_ops_per_sample) * s, c, true);
            rep.stages.push_back({layer.desc.name, layer.stages[0].name, l.total() / s});
            latency += l;
            continue;
        }
        const std::size_t seq = layer.in_shape[0];
        const auto& st = layer.stages;
        Breakdown stage1 = compute(st[0].sites[0]);
        for (std::size_t k = 1; k < st[0].sites.size(); ++k) stage1 = max_by_total(stage1, compute(st[0].sites[k]));
        Breakdown stage2;
        const double softmax_ops = static_cast<double>(seq * seq * 4) * s;
        for (std::size_t h = 0; h < st[1].sites.size(); ++h) {
            const std::size_t qk = st[1].sites[h], pv = st[3].sites[h];
            const Breakdown front = compute(qk) + digital_cost(softmax_ops, c, true);
            const Breakdown& vw = costs[pv].write_latency;
            Breakdown head = costs[qk].write_latency + compute(pv);
            head += chip.overlap_v_write ? max_by_total(vw, front) : vw + front;
            stage2 = h == 0 ? head : max_by_total(stage2, head);
        }
        const double rest_ops =
            static_cast<double>(layer.digital_ops_per_sample) * s - softmax_ops * static_cast<double>(layer.desc.heads);
        const Breakdown rest = digital_cost(rest_ops, c, true);
        const Breakdown o = compute(st[4].sites[0]), f1 = compute(st[5].sites[0]), f2 = compute(st[6].sites[0]);
        rep.stages.push_back({layer.desc.name, "qkv", stage1.total() / s});
        rep.stages.push_back({layer.desc.name, "stage2", stage2.total() / s});
        rep.stages.push_back({layer.desc.name, "out_proj", o.total() / s});
        rep.stages.push_back({layer.desc.name, "ffn", (f1 + f2).total() / s});
        latency += stage1 + stage2 + o + f1 + f2 + rest;
    }
    double ops = 0.0;
    for (const auto& layer : chip.layers) ops += static_cast<double>(layer.digital_ops_per_sample) * samples;
    energy += digital_cost(ops, c, false);

    rep.latency = latency.scaled(1.0 / samples);
    rep.energy = energy.scaled(1.0 / samples);
    return rep;
}

}  // namespace

Breakdown& Breakdown::operator+=(const Breakdown& o) {
    subarray += o.subarray;
    buffer += o.buffer;
    interconnect += o.interconnect;
    digital += o.digital;
    return *this;
}

Breakdown Breakdown::scaled(double f) const { return {subarray * f, buffer * f, interconnect * f, digital * f}; }

Breakdown operator+(Breakdown a, const Breakdown& b) { return a += b; }

const Breakdown& max_by_total(const Breakdown& a, const Breakdown& b) { return b.total() > a.total() ? b : a; }

ReadCost subarray_static_cost(const SlotMask& mask, int p, std::size_t share, const CostParams& c) {
    const double adcs = static_cast<double>(ceil_div(mask.used_cols, share));
    ReadCost r;
    r.energy = c.e_wl * static_cast<double>(mask.used_rows) +
               (c.adc_energy_per_level * adc_levels(p) + c.adc_energy_per_bit * p) * adcs + c.e_shift_add * adcs;
    r.latency = c.t_wl + p * c.t_comp * static_cast<double>(share) + c.t_shift_add;
    return r;
}

ReadCost subarray_read_cost(const SlotMask& mask, double alpha, double g, int p, std::size_t share,
                            const CostParams& c) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("activity must lie in [0, 1]");
    ReadCost r = subarray_static_cost(mask, p, share, c);
    r.energy += c.e_cell * alpha * static_cast<double>(mask.used_rows) * static_cast<double>(mask.used_cols) * g;
    return r;
}

ChipPlan build_chip(const Network& net, const SimulationConfig& cfg) {
    ChipPlan chip;
    chip.subarray_rows = cfg.arch.subarray_rows;
    chip.subarray_cols = cfg.arch.subarray_cols;
    chip.dmm_subarray_rows = cfg.arch.dmm_subarray_rows;
    chip.dmm_subarray_cols = cfg.arch.dmm_subarray_cols;
    chip.subarrays_per_pe = cfg.arch.subarrays_per_pe;
    chip.pes_per_tile = cfg.arch.pes_per_tile;
    chip.adc_share = cfg.arch.adc_share;
    chip.overlap_v_write = cfg.arch.overlap_v_write;
    chip.input_bits = cfg.quant.input_bits;
    chip.macs_per_sample = static_cast<double>(net.macs_per_sample());
    chip.cost = cfg.cost;
    for (const auto& site : net.sites) {
        SitePlacement sp;
        sp.site = site;
        const PipelineConfig pipe = site_pipeline(cfg, site.kind);
        sp.device = pipe.device;
        sp.cell_bits = pipe.cell_bits;
        sp.adc_precision = cfg.adc.precision;
        sp.plan = site_plan(site, cfg);
        sp.tiles = ceil_div(ceil_div(sp.plan.slots.size(), chip.subarrays_per_pe), chip.pes_per_tile);
        (sp.device.kind == DeviceKind::Sram ? chip.sram_tiles : chip.envm_tiles) += sp.tiles;
        chip.sites.push_back(std::move(sp));
    }
    std::size_t footprint = 0;
    for (const auto& l : net.layers) {
        NetLayer copy;
        copy.desc = l.desc;
        copy.in_shape = l.in_shape;
        copy.out_shape = l.out_shape;
        copy.stages = l.stages;
        copy.digital_ops_per_sample = l.digital_ops_per_sample;
        footprint = std::max({footprint, shape_product(l.in_shape), shape_product(l.out_shape)});
        if (l.desc.kind == LayerKind::Attention) {
            const std::size_t seq = l.in_shape[0];
            footprint = std::max({footprint, 3 * seq * l.desc.d_model, seq * l.desc.d_ff, l.desc.heads * seq * seq});
        }
        chip.layers.push_back(std::move(copy));
    }
    chip.buffer_bits = static_cast<double>(footprint) * cfg.quant.input_bits;
    return chip;
}

HardwareReport estimate_trace(const ChipPlan& plan, const std::vector<SiteRecord>& records) {
    return assemble_report(plan, records, EstimateMode::Trace);
}

HardwareReport estimate_average(const ChipPlan& plan, const std::vector<SiteRecord>& records) {
    return assemble_report(plan, records, EstimateMode::Average);
}

HardwareReport estimate(const ChipPlan& plan, const std::vector<SiteRecord>& records, EstimateMode mode) {
    return assemble_report(plan, records, mode);
}

Metrics summarize(double macs, double latency, double energy, double area) {
    if (!(latency > 0.0)) throw DomainError("latency must be positive");
    if (!(energy > 0.0)) throw DomainError("energy must be positive");
    if (!(area > 0.0)) throw DomainError("area must be positive");
    Metrics m;
    m.tops = 2.0 * macs / latency / 1e12;
    m.tops_per_w = 2.0 * macs / energy / 1e12;
    m.tops_per_mm2 = m.tops / area;
    return m;
}

Metrics summarize(const HardwareReport& r) {
    return summarize(r.macs_per_inference, r.latency.total(), r.energy.total(), r.area.total());
}

json to_json(const Breakdown& b) {
    return json{{"subarray", b.subarray}, {"buffer", b.buffer}, {"interconnect", b.interconnect},
                {"digital", b.digital}, {"total", b.total()}};
}

namespace {

Breakdown breakdown_from_json(const json& j) {
    return {j.at("subarray").get<double>(), j.at("buffer").get<double>(), j.at("interconnect").get<double>(),
            j.at("digital").get<double>()};
}

}  // namespace

json to_json(const HardwareReport& r) {
    json sites = json::array();
    for (const auto& s : r.sites) {
        sites.push_back({{"name", s.name},
                         {"kind", to_string(s.kind)},
                         {"tile_kind", to_string(s.tile_kind)},
                         {"subarrays", s.subarrays},
                         {"tiles", s.tiles},
                         {"activity", s.activity},
                         {"conversions", s.conversions},
                         {"cost_calls", s.cost_calls},
                         {"area_mm2", to_json(s.area)},
                         {"latency_s", to_json(s.latency)},
                         {"energy_j", to_json(s.energy)}});
    }
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back({{"layer", s.layer}, {"stage", s.stage}, {"latency_s", s.latency}});
    json j{{"schema_version", HardwareReport::kSchemaVersion},
           {"mode", to_string(r.mode)},
           {"samples", r.samples},
           {"macs_per_inference", r.macs_per_inference},
           {"cost_calls", r.cost_calls},
           {"area_mm2", to_json(r.area)},
           {"latency_s", to_json(r.latency)},
           {"energy_j", to_json(r.energy)},
           {"sites", sites},
           {"stages", stages}};
    const Metrics m = summarize(r);
    j["metrics"] = {{"tops", m.tops}, {"tops_per_w", m.tops_per_w}, {"tops_per_mm2", m.tops_per_mm2}};
    return j;
}

HardwareReport hardware_report_from_json(const json& j) {
    try {
        if (!j.is_object() || !j.contains("schema_version")) throw FormatError("report has no schema_version");
        if (j.at("schema_version").get<int>() != HardwareReport::kSchemaVersion)
            throw FormatError("report schema version " + j.at("schema_version").dump() + " is not supported");
        HardwareReport r;
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.samples = j.at("samples").get<std::size_t>();
        r.macs_per_inference = j.at("macs_per_inference").get<double>();
        r.cost_calls = j.at("cost_calls").get<std::uint64_t>();
        r.area = breakdown_from_json(j.at("area_mm2"));
        r.latency = breakdown_from_json(j.at("latency_s"));
        r.energy = breakdown_from_json(j.at("energy_j"));
        for (const auto& s : j.at("sites")) {
            SiteReport sr;
            sr.name = s.at("name").get<std::string>();
            sr.kind = s.at("kind").get<std::string>() == "DMM" ? SiteKind::Dmm : SiteKind::Smm;
            sr.tile_kind = s.at("tile_kind").get<std::string>() == "SRAM" ? DeviceKind::Sram : DeviceKind::ENvm;
            sr.subarrays = s.at("subarrays").get<std::size_t>();
            sr.tiles = s.at("tiles").get<std::size_t>();
            sr.activity = s.at("activity").get<double>();
            sr.conversions = s.at("conversions").get<std::uint64_t>();
            sr.cost_calls = s.at("cost_calls").get<std::uint64_t>();
            sr.area = breakdown_from_json(s.at("area_mm2"));
            sr.latency = breakdown_from_json(s.at("latency_s"));
            sr.energy = breakdown_from_json(s.at("energy_j"));
            r.sites.push_back(std::move(sr));
        }
        for (const auto& s : j.at("stages"))
            r.stages.push_back({s.at("layer").get<std::string>(), s.at("stage").get<std::string>(),
                                s.at("latency_s").get<double>()});
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

std::string render_text(const HardwareReport& r) {
    const Metrics m = summarize(r);
    std::ostringstream out;
    char line[160];
    auto row = [&](const char* name, double value, const char* unit) {
        std::snprintf(line, sizeof line, "%-28s %14.6g %s\n", name, value, unit);
        out << line;
    };
    out << "mode: " << to_string(r.mode) << ", samples: " << r.samples << '\n';
    row("Area", r.area.total(), "mm^2");
    row("Energy per inference", r.energy.total(), "J");
    row("Latency per inference", r.latency.total(), "s");
    row("Energy efficiency", m.tops_per_w, "TOPS/W");
    row("Throughput", m.tops, "TOPS");
    row("Compute efficiency", m.tops_per_mm2, "TOPS/mm^2");
    out << '\n';
    std::snprintf(line, sizeof line, "%-14s %10s %10s %10s\n", "breakdown", "area", "latency", "energy");
    out << line;
    auto pct = [](double part, double total) { return total > 0.0 ? 100.0 * part / total : 0.0; };
    const std::pair<const char*, double Breakdown::*> cats[] = {{"subarray", &Breakdown::subarray},
                                                                 {"buffer", &Breakdown::buffer},
                                                                 {"interconnect", &Breakdown::interconnect},
                                                                 {"digital", &Breakdown::digital}};
    for (const auto& [name, field] : cats) {
        std::snprintf(line, sizeof line, "%-14s %9.2f%% %9.2f%% %9.2f%%\n", name, pct(r.area.*field, r.area.total()),
                      pct(r.latency.*field, r.latency.total()), pct(r.energy.*field, r.energy.total()));
        out << line;
    }
    return out.str();
}

}  // namespace cimsim
