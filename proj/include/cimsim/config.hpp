#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cimsim {

using json = nlohmann::json;

enum class QuantScheme { UniformSymmetric, DynamicFixedPoint };
enum class Design { Design1, Design2, Design3 };
enum class InputSignMode { UnsignedBitSerial, TwosComplementBitSerial };
enum class OffsetCancellation { DummyColumn, None };
enum class DeviceKind { ENvm, Sram };
enum class AdcKind { Linear, Calibrated, Custom, Ideal };
enum class EstimateMode { Trace, Average };

std::string to_string(QuantScheme);
std::string to_string(Design);
std::string to_string(InputSignMode);
std::string to_string(OffsetCancellation);
std::string to_string(DeviceKind);
std::string to_string(AdcKind);
std::string to_string(EstimateMode);

QuantScheme parse_quant_scheme(const std::string&);
Design parse_design(const std::string&);
EstimateMode parse_mode(const std::string&);

constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

struct QuantConfig {
    QuantScheme scheme = QuantScheme::UniformSymmetric;
    int weight_bits = 4;
    int input_bits = 4;
    bool operator==(const QuantConfig&) const = default;
};

struct MappingConfig {
    Design design = Design::Design2;
    int cell_bits = 2;
    InputSignMode input_sign_mode = InputSignMode::UnsignedBitSerial;
    OffsetCancellation offset_cancellation = OffsetCancellation::DummyColumn;
    bool operator==(const MappingConfig&) const = default;
};

struct DeviceModel {
    std::string name = "RRAM";
    double r_on = 6000.0;                ///< ohms
    double on_off_ratio = 150.0;         ///< G_max / G_min, may be infinite
    int cell_bits_max = 4;
    double sigma_cell = 0.0;             ///< std-dev of programming noise, in digit units
    double write_energy = 1e-12;         ///< J per cell write
    double write_latency = 1e-7;         ///< s per row write
    DeviceKind kind = DeviceKind::ENvm;
    bool operator==(const DeviceModel&) const = default;
};

/// Built-in SRAM device used for dynamic-matmul tiles unless overridden.
DeviceModel default_sram_device();

struct AdcConfig {
    AdcKind kind = AdcKind::Calibrated;
    int precision = 5;
    std::optional<double> lo;            ///< linear full-scale override
    std::optional<double> hi;
    std::string custom_path;             ///< refs/centers JSON for kind = custom (absolute once loaded)
    bool operator==(const AdcConfig&) const = default;
};

struct ArchConfig {
    std::size_t subarray_rows = 128;
    std::size_t subarray_cols = 128;
    std::size_t subarrays_per_pe = 4;
    std::size_t pes_per_tile = 4;
    std::size_t adc_share = 8;           ///< columns multiplexed onto one ADC
    std::size_t dmm_subarray_rows = 64;
    std::size_t dmm_subarray_cols = 64;
    DeviceModel dmm_device = default_sram_device();
    bool overlap_v_write = true;
    bool operator==(const ArchConfig&) const = default;
};

/// Analytical cost coefficients, SI units. Defaults are the version-1 set shipped in
/// configs/cost_defaults_v1.json.
struct CostParams {
    int version = 1;
    // area
    double cell_area_envm = 1.45e-14;       ///< m^2 per eNVM cell
    double cell_area_sram = 1.0e-13;        ///< m^2 per SRAM cell
    double adc_area_per_level = 8e-12;      ///< a0, m^2 per 2^p
    double adc_area_per_bit = 5e-11;        ///< a1, m^2 per bit
    double wl_driver_area = 2e-12;          ///< m^2 per row
    double shift_add_area = 1.5e-11;        ///< m^2 per ADC
    double buffer_area_per_bit = 2.5e-13;   ///< m^2
    double tile_buffer_bits = 65536;        ///< bits of input buffer per tile
    double ic_area_per_tile = 1e-8;         ///< m^2
    double digital_area_per_tile = 5e-9;    ///< m^2
    double softmax_unit_area = 2e-8;        ///< m^2 per attention block
    // energy
    double e_cell = 2e-16;                  ///< J per active-row x column x unit conductance
    double e_wl = 5e-15;                    ///< J per row per read cycle
    double adc_energy_per_level = 2e-15;    ///< e0, J per 2^p per conversion
    double adc_energy_per_bit = 1e-14;      ///< e1, J per bit per conversion
    double e_shift_add = 5e-15;             ///< J per conversion
    double e_buffer_bit = 2e-14;            ///< J per bit moved through buffers
    double e_ic_bit_mm = 5e-14;             ///< J per bit per mm of H-tree span
    double e_digital_op = 5e-14;            ///< J per digital op
    // time
    double t_wl = 1e-9;                     ///< s per read cycle (wordline settle)
    double t_comp = 2.5e-10;                ///< s per ADC bit
    double t_shift_add = 5e-10;             ///< s per read cycle
    double buffer_bus_bits = 512;
    double t_buffer_cycle = 1e-9;
    double ic_bus_bits = 256;
    double t_ic_mm = 5e-10;                 ///< s per bus transfer per mm of span
    double digital_lanes = 64;
    double t_digital_op = 1e-9;
    bool operator==(const CostParams&) const = default;
};

json to_json(const CostParams&);
/// Overlay `j` onto defaults; unknown keys are schema errors under `prefix`.
CostParams cost_params_from_json(const json& j, const std::string& prefix = "cost");

struct SimulationConfig {
    QuantConfig quant;
    MappingConfig mapping;
    DeviceModel device;                  ///< device of static-matmul (eNVM) tiles
    AdcConfig adc;
    ArchConfig arch;
    CostParams cost;
    std::uint64_t seed = 1;
    EstimateMode mode = EstimateMode::Average;
    bool operator==(const SimulationConfig&) const = default;
};

/// Throws ConfigError (parse, schema or range) naming the offending key path.
SimulationConfig load_config(const std::filesystem::path& path);
SimulationConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {});
SimulationConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
json to_json(const SimulationConfig& cfg);
json to_json(const DeviceModel& d);
DeviceModel device_from_json(const json& j, const std::string& prefix);

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool ok() const noexcept { return errors.empty(); }
};

ValidationReport validate(const SimulationConfig& cfg);

/// Columns each weight occupies in one array for the given mapping.
int columns_per_weight(Design design, int weight_bits, int cell_bits);
/// Constant-offset columns per subarray (Design3 dummy column).
int extra_columns(Design design);

/// Devices from the published comparison table (on/off ratio and R_on only).
std::vector<DeviceModel> builtin_devices();
std::optional<DeviceModel> find_builtin_device(const std::string& name);

}  // namespace cimsim
