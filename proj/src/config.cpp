#include "cimsim/config.hpp"

#include "cimsim/error.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace cimsim {
namespace {

template <class E>
struct EnumName {
    E value;
    const char* name;
};

constexpr EnumName<QuantScheme> kSchemes[] = {{QuantScheme::UniformSymmetric, "uniform-symmetric"},
                                              {QuantScheme::DynamicFixedPoint, "dynamic-fixed-point"}};
constexpr EnumName<Design> kDesigns[] = {
    {Design::Design1, "design1"}, {Design::Design2, "design2"}, {Design::Design3, "design3"}};
constexpr EnumName<InputSignMode> kSignModes[] = {
    {InputSignMode::UnsignedBitSerial, "unsigned-bitserial"},
    {InputSignMode::TwosComplementBitSerial, "twos-complement-bitserial"}};
constexpr EnumName<OffsetCancellation> kOffsets[] = {{OffsetCancellation::DummyColumn, "dummy-column"},
                                                     {OffsetCancellation::None, "none"}};
constexpr EnumName<DeviceKind> kDeviceKinds[] = {{DeviceKind::ENvm, "eNVM"}, {DeviceKind::Sram, "SRAM"}};
constexpr EnumName<AdcKind> kAdcKinds[] = {{AdcKind::Linear, "linear"},
                                           {AdcKind::Calibrated, "calibrated"},
                                           {AdcKind::Custom, "custom"},
                                           {AdcKind::Ideal, "ideal"}};
constexpr EnumName<EstimateMode> kModes[] = {{EstimateMode::Trace, "trace"}, {EstimateMode::Average, "average"}};

template <class E, std::size_t N>
std::string name_of(const EnumName<E> (&table)[N], E v) {
    for (const auto& e : table)
        if (e.value == v) return e.name;
    return "?";
}

template <class E, std::size_t N>
std::optional<E> value_of(const EnumName<E> (&table)[N], const std::string& s) {
    for (const auto& e : table)
        if (s == e.name) return e.value;
    return std::nullopt;
}

template <class E, std::size_t N>
std::string choices(const EnumName<E> (&table)[N]) {
    std::string out;
    for (const auto& e : table) out += (out.empty() ? "" : "|") + std::string(e.name);
    return out;
}

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void schema_error(const std::string& key, const std::string& msg) {
    throw ConfigError(ConfigErrorKind::Schema, key, msg);
}
[[noreturn]] void range_error(const std::string& key, const std::string& msg) {
    throw ConfigError(ConfigErrorKind::Range, key, msg);
}

/// Walks one JSON object, tracking consumed keys so leftovers are reported.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) schema_error(path_, "expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }
    std::string path(const char* key) const { return join(path_, key); }

    const json* raw(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const char* key, int& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) schema_error(path(key), "expected an integer");
            out = v->get<int>();
        }
    }
    void get(const char* key, std::size_t& out) {
        if (const json* v = raw(key)) {
            if (!v->is_number_integer()) schema_error(path(key), "expected an integer");
            const auto x = v->get<long long>();
            if (x < 0) range_error(path(key), "must be non-negative");
            out = static_cast<std::size_t>(x);
        }
    }
    void get(const char* key, std::uint64_t& out, bool) {
        if (const json* v = raw(key)) {
            if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
                schema_error(path(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    /// Numbers, plus the literal string "inf" when `allow_inf`.
    void get(const char* key, double& out, bool allow_inf = false) {
        if (const json* v = raw(key)) {
            if (v->is_number()) {
                out = v->get<double>();
            } else if (allow_inf && v->is_string() && v->get<std::string>() == "inf") {
                out = kInfiniteRatio;
            } else {
                schema_error(path(key), allow_inf ? "expected a number or \"inf\"" : "expected a number");
            }
        }
    }
    void get(const char* key, std::optional<double>& out) {
        if (const json* v = raw(key)) {
            if (v->is_null()) return;
            if (!v->is_number()) schema_error(path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const char* key, bool& out) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) schema_error(path(key), "expected a boolean");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) schema_error(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    template <class E, std::size_t N>
    void get_enum(const char* key, E& out, const EnumName<E> (&table)[N]) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) schema_error(path(key), "expected one of " + choices(table));
            auto e = value_of(table, v->get<std::string>());
            if (!e) schema_error(path(key), "unknown value '" + v->get<std::string>() + "', expected " + choices(table));
            out = *e;
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) schema_error(join(path_, it.key()), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

json ratio_to_json(double r) { return std::isinf(r) ? json("inf") : json(r); }

void check_device(const DeviceModel& d, const std::string& prefix) {
    if (!(d.on_off_ratio > 1.0)) range_error(join(prefix, "on_off_ratio"), "must be > 1 or \"inf\"");
    if (d.cell_bits_max < 1 || d.cell_bits_max > 4) range_error(join(prefix, "cell_bits_max"), "must be in 1..4");
    if (!(d.sigma_cell >= 0.0)) range_error(join(prefix, "sigma_cell"), "must be >= 0");
    if (!(d.r_on > 0.0)) range_error(join(prefix, "r_on"), "must be > 0");
    if (d.write_energy < 0.0) range_error(join(prefix, "write_energy"), "must be >= 0");
    if (d.write_latency < 0.0) range_error(join(prefix, "write_latency"), "must be >= 0");
}

using CostField = std::pair<const char*, double CostParams::*>;
const std::vector<CostField>& cost_fields() {
    static const std::vector<CostField> fields = {
        {"cell_area_envm", &CostParams::cell_area_envm},
        {"cell_area_sram", &CostParams::cell_area_sram},
        {"adc_area_per_level", &CostParams::adc_area_per_level},
        {"adc_area_per_bit", &CostParams::adc_area_per_bit},
        {"wl_driver_area", &CostParams::wl_driver_area},
        {"shift_add_area", &CostParams::shift_add_area},
        {"buffer_area_per_bit", &CostParams::buffer_area_per_bit},
        {"tile_buffer_bits", &CostParams::tile_buffer_bits},
        {"ic_area_per_tile", &CostParams::ic_area_per_tile},
        {"digital_area_per_tile", &CostParams::digital_area_per_tile},
        {"softmax_unit_area", &CostParams::softmax_unit_area},
        {"e_cell", &CostParams::e_cell},
        {"e_wl", &CostParams::e_wl},
        {"adc_energy_per_level", &CostParams::adc_energy_per_level},
        {"adc_energy_per_bit", &CostParams::adc_energy_per_bit},
        {"e_shift_add", &CostParams::e_shift_add},
        {"e_buffer_bit", &CostParams::e_buffer_bit},
        {"e_ic_bit_mm", &CostParams::e_ic_bit_mm},
        {"e_digital_op", &CostParams::e_digital_op},
        {"t_wl", &CostParams::t_wl},
        {"t_comp", &CostParams::t_comp},
        {"t_shift_add", &CostParams::t_shift_add},
        {"buffer_bus_bits", &CostParams::buffer_bus_bits},
        {"t_buffer_cycle", &CostParams::t_buffer_cycle},
        {"ic_bus_bits", &CostParams::ic_bus_bits},
        {"t_ic_mm", &CostParams::t_ic_mm},
        {"digital_lanes", &CostParams::digital_lanes},
        {"t_digital_op", &CostParams::t_digital_op},
    };
    return fields;
}

}  // namespace

std::string to_string(QuantScheme v) { return name_of(kSchemes, v); }
std::string to_string(Design v) { return name_of(kDesigns, v); }
std::string to_string(InputSignMode v) { return name_of(kSignModes, v); }
std::string to_string(OffsetCancellation v) { return name_of(kOffsets, v); }
std::string to_string(DeviceKind v) { return name_of(kDeviceKinds, v); }
std::string to_string(AdcKind v) { return name_of(kAdcKinds, v); }
std::string to_string(EstimateMode v) { return name_of(kModes, v); }

QuantScheme parse_quant_scheme(const std::string& s) {
    if (auto v = value_of(kSchemes, s)) return *v;
    throw DomainError("unknown quantization scheme '" + s + "'");
}
Design parse_design(const std::string& s) {
    if (auto v = value_of(kDesigns, s)) return *v;
    throw DomainError("unknown design '" + s + "'");
}
EstimateMode parse_mode(const std::string& s) {
    if (auto v = value_of(kModes, s)) return *v;
    throw DomainError("unknown mode '" + s + "'");
}

DeviceModel default_sram_device() {
    DeviceModel d;
    d.name = "SRAM";
    d.r_on = 1e4;
    d.on_off_ratio = kInfiniteRatio;
    d.cell_bits_max = 1;
    d.sigma_cell = 0.0;
    d.write_energy = 1e-15;
    d.write_latency = 1e-9;
    d.kind = DeviceKind::Sram;
    return d;
}

json to_json(const CostParams& c) {
    json j;
    j["version"] = c.version;
    for (const auto& [name, member] : cost_fields()) j[name] = c.*member;
    return j;
}

CostParams cost_params_from_json(const json& j, const std::string& prefix) {
    CostParams c;
    ObjectReader r(j, prefix);
    r.get("version", c.version);
    if (c.version != 1) range_error(r.path("version"), "unsupported cost-parameter version");
    for (const auto& [name, member] : cost_fields()) {
        r.get(name, c.*member);
        if (!(c.*member >= 0.0)) range_error(r.path(name), "must be >= 0");
    }
    r.finish();
    return c;
}

json to_json(const DeviceModel& d) {
    return json{{"name", d.name},
                {"r_on", d.r_on},
                {"on_off_ratio", ratio_to_json(d.on_off_ratio)},
                {"cell_bits_max", d.cell_bits_max},
                {"sigma_cell", d.sigma_cell},
                {"write_energy", d.write_energy},
                {"write_latency", d.write_latency},
                {"kind", to_string(d.kind)}};
}

DeviceModel device_from_json(const json& j, const std::string& prefix) {
    DeviceModel d;
    // A bare string names a built-in device.
    if (j.is_string()) {
        auto found = find_builtin_device(j.get<std::string>());
        if (!found) schema_error(prefix, "unknown built-in device '" + j.get<std::string>() + "'");
        return *found;
    }
    ObjectReader r(j, prefix);
    if (r.has("preset")) {
        std::string preset;
        r.get("preset", preset);
        auto found = find_builtin_device(preset);
        if (!found) schema_error(r.path("preset"), "unknown built-in device '" + preset + "'");
        d = *found;
    }
    r.get("name", d.name);
    r.get("r_on", d.r_on);
    r.get("on_off_ratio", d.on_off_ratio, true);
    r.get("cell_bits_max", d.cell_bits_max);
    r.get("sigma_cell", d.sigma_cell);
    r.get("write_energy", d.write_energy);
    r.get("write_latency", d.write_latency);
    r.get_enum("kind", d.kind, kDeviceKinds);
    r.finish();
    check_device(d, prefix);
    return d;
}

SimulationConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    SimulationConfig cfg;
    ObjectReader top(j, "");
    top.get("seed", cfg.seed, true);
    top.get_enum("mode", cfg.mode, kModes);

    if (const json* q = top.raw("quant")) {
        ObjectReader r(*q, "quant");
        r.get_enum("scheme", cfg.quant.scheme, kSchemes);
        r.get("weight_bits", cfg.quant.weight_bits);
        r.get("input_bits", cfg.quant.input_bits);
        r.finish();
        if (cfg.quant.weight_bits < 2 || cfg.quant.weight_bits > 8)
            range_error("quant.weight_bits", "must be in 2..8");
        if (cfg.quant.input_bits < 2 || cfg.quant.input_bits > 8)
            range_error("quant.input_bits", "must be in 2..8");
    }
    if (const json* m = top.raw("mapping")) {
        ObjectReader r(*m, "mapping");
        r.get_enum("design", cfg.mapping.design, kDesigns);
        r.get("cell_bits", cfg.mapping.cell_bits);
        r.get_enum("input_sign_mode", cfg.mapping.input_sign_mode, kSignModes);
        r.get_enum("offset_cancellation", cfg.mapping.offset_cancellation, kOffsets);
        r.finish();
        if (cfg.mapping.cell_bits < 1 || cfg.mapping.cell_bits > 4)
            range_error("mapping.cell_bits", "must be in 1..4");
    }
    if (const json* d = top.raw("device")) cfg.device = device_from_json(*d, "device");
    if (const json* a = top.raw("adc")) {
        ObjectReader r(*a, "adc");
        r.get_enum("kind", cfg.adc.kind, kAdcKinds);
        r.get("precision", cfg.adc.precision);
        r.get("lo", cfg.adc.lo);
        r.get("hi", cfg.adc.hi);
        r.get("custom_path", cfg.adc.custom_path);
        r.finish();
        if (cfg.adc.lo && cfg.adc.hi && !(*cfg.adc.hi > *cfg.adc.lo))
            range_error("adc.hi", "must exceed adc.lo");
        if (!cfg.adc.custom_path.empty()) {
            std::filesystem::path p(cfg.adc.custom_path);
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            cfg.adc.custom_path = p.lexically_normal().string();
        }
    }
    if (const json* a = top.raw("arch")) {
        ObjectReader r(*a, "arch");
        auto& arch = cfg.arch;
        r.get("subarray_rows", arch.subarray_rows);
        r.get("subarray_cols", arch.subarray_cols);
        r.get("subarrays_per_pe", arch.subarrays_per_pe);
        r.get("pes_per_tile", arch.pes_per_tile);
        r.get("adc_share", arch.adc_share);
        r.get("dmm_subarray_rows", arch.dmm_subarray_rows);
        r.get("dmm_subarray_cols", arch.dmm_subarray_cols);
        if (const json* d = r.raw("dmm_device")) arch.dmm_device = device_from_json(*d, "arch.dmm_device");
        r.get("overlap_v_write", arch.overlap_v_write);
        r.finish();
        for (auto [name, v] : {std::pair{"subarray_rows", arch.subarray_rows},
                               std::pair{"subarray_cols", arch.subarray_cols},
                               std::pair{"dmm_subarray_rows", arch.dmm_subarray_rows},
                               std::pair{"dmm_subarray_cols", arch.dmm_subarray_cols}})
            if (!is_pow2(v)) range_error(join("arch", name), "must be a positive power of two");
        if (arch.subarrays_per_pe == 0) range_error("arch.subarrays_per_pe", "must be positive");
        if (arch.pes_per_tile == 0) range_error("arch.pes_per_tile", "must be positive");
        if (arch.adc_share == 0 || arch.subarray_cols % arch.adc_share != 0)
            range_error("arch.adc_share", "must divide arch.subarray_cols");
        if (arch.dmm_subarray_cols % arch.adc_share != 0)
            range_error("arch.adc_share", "must divide arch.dmm_subarray_cols");
    }
    if (const json* c = top.raw("cost")) cfg.cost = cost_params_from_json(*c, "cost");
    top.finish();
    return cfg;
}

SimulationConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(ConfigErrorKind::Parse, "", std::string("malformed config: ") + e.what());
    }
    return config_from_json(j, base_dir);
}

SimulationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigErrorKind::Parse, "", "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.parent_path());
}

json to_json(const SimulationConfig& cfg) {
    json adc{{"kind", to_string(cfg.adc.kind)}, {"precision", cfg.adc.precision}};
    if (cfg.adc.lo) adc["lo"] = *cfg.adc.lo;
    if (cfg.adc.hi) adc["hi"] = *cfg.adc.hi;
    if (!cfg.adc.custom_path.empty()) adc["custom_path"] = cfg.adc.custom_path;
    return json{
        {"seed", cfg.seed},
        {"mode", to_string(cfg.mode)},
        {"quant",
         {{"scheme", to_string(cfg.quant.scheme)},
          {"weight_bits", cfg.quant.weight_bits},
          {"input_bits", cfg.quant.input_bits}}},
        {"mapping",
         {{"design", to_string(cfg.mapping.design)},
          {"cell_bits", cfg.mapping.cell_bits},
          {"input_sign_mode", to_string(cfg.mapping.input_sign_mode)},
          {"offset_cancellation", to_string(cfg.mapping.offset_cancellation)}}},
        {"device", to_json(cfg.device)},
        {"adc", adc},
        {"arch",
         {{"subarray_rows", cfg.arch.subarray_rows},
          {"subarray_cols", cfg.arch.subarray_cols},
          {"subarrays_per_pe", cfg.arch.subarrays_per_pe},
          {"pes_per_tile", cfg.arch.pes_per_tile},
          {"adc_share", cfg.arch.adc_share},
          {"dmm_subarray_rows", cfg.arch.dmm_subarray_rows},
          {"dmm_subarray_cols", cfg.arch.dmm_subarray_cols},
          {"dmm_device", to_json(cfg.arch.dmm_device)},
          {"overlap_v_write", cfg.arch.overlap_v_write}}},
        {"cost", to_json(cfg.cost)},
    };
}

ValidationReport validate(const SimulationConfig& cfg) {
    ValidationReport rep;
    const auto& m = cfg.mapping;
    const int n = cfg.quant.weight_bits;
    if (cfg.quant.weight_bits < 2 || cfg.quant.weight_bits > 8) rep.errors.push_back("quant.weight_bits: must be in 2..8");
    if (cfg.quant.input_bits < 2 || cfg.quant.input_bits > 8) rep.errors.push_back("quant.input_bits: must be in 2..8");
    if (m.cell_bits < 1 || m.cell_bits > 4) rep.errors.push_back("mapping.cell_bits: must be in 1..4");
    if (m.cell_bits > n) rep.errors.push_back("mapping.cell_bits: cell precision exceeds weight precision");
    if (m.cell_bits > cfg.device.cell_bits_max)
        rep.errors.push_back("mapping.cell_bits: cell precision exceeds device capability");
    if (!(cfg.device.on_off_ratio > 1.0)) rep.errors.push_back("device.on_off_ratio: must be > 1 or \"inf\"");
    if (!(cfg.device.sigma_cell >= 0.0)) rep.errors.push_back("device.sigma_cell: must be >= 0");
    if (cfg.adc.precision < 1) rep.errors.push_back("adc.precision: ADC precision must be >= 1");
    if (cfg.adc.kind == AdcKind::Custom) {
        if (cfg.adc.custom_path.empty())
            rep.errors.push_back("adc.custom_path: required for a custom ADC");
        else if (!std::filesystem::exists(cfg.adc.custom_path))
            rep.errors.push_back("adc.custom_path: file does not exist: " + cfg.adc.custom_path);
    }
    if (m.cell_bits >= 1 && m.cell_bits <= n) {
        const auto needed = static_cast<std::size_t>(columns_per_weight(m.design, n, m.cell_bits) + extra_columns(m.design));
        if (cfg.arch.subarray_cols < needed)
            rep.errors.push_back("arch.subarray_cols: too narrow for one weight's digit columns");
        const int dmm_k = std::min(m.cell_bits, cfg.arch.dmm_device.cell_bits_max);
        const auto dmm_needed = static_cast<std::size_t>(columns_per_weight(m.design, n, dmm_k) + extra_columns(m.design));
        if (cfg.arch.dmm_subarray_cols < dmm_needed)
            rep.errors.push_back("arch.dmm_subarray_cols: too narrow for one weight's digit columns");
    }
    if (cfg.arch.adc_share == 0 || cfg.arch.subarray_cols % cfg.arch.adc_share != 0)
        rep.errors.push_back("arch.adc_share: must divide arch.subarray_cols");
    if (cfg.arch.dmm_device.kind != DeviceKind::Sram)
        rep.warnings.push_back("arch.dmm_device: dynamic matmuls are normally mapped to SRAM tiles");
    // Plumbing default: above a quarter of one digit step the device is unlikely to be useful.
    if (cfg.device.sigma_cell > 0.25) rep.warnings.push_back("device.sigma_cell: variation unusually large");
    return rep;
}

std::vector<DeviceModel> builtin_devices() {
    auto make = [](std::string name, double r_on, double ratio) {
        DeviceModel d;
        d.name = std::move(name);
        d.r_on = r_on;
        d.on_off_ratio = ratio;
        d.cell_bits_max = 4;
        return d;
    };
    return {make("RRAM-150", 6e3, 150.0), make("RRAM-17", 6e3, 17.0), make("RRAM-10", 100e3, 10.0),
            make("FeFET-100", 240e3, 100.0), make("PCM-12.5", 40e3, 12.5)};
}

std::optional<DeviceModel> find_builtin_device(const std::string& name) {
    for (auto& d : builtin_devices())
        if (d.name == name) return d;
    if (name == "SRAM") return default_sram_device();
    return std::nullopt;
}

}  // namespace cimsim
