#pragma once

#include "cimsim/config.hpp"
#include "cimsim/hwperf.hpp"
#include "cimsim/model.hpp"
#include "cimsim/netgraph.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cimsim {

struct SearchSpace {
    std::vector<QuantScheme> schemes{QuantScheme::UniformSymmetric, QuantScheme::DynamicFixedPoint};
    int min_bits = 2;
    int max_bits = 8;
    std::vector<Design> designs{Design::Design1, Design::Design2, Design::Design3};
    std::vector<int> cell_bits{1, 2, 4};
    int adc_min = 1;
    int adc_max = 10;
    std::vector<DeviceModel> devices;  ///< empty selects the built-in device table
    double tolerance = 0.03;
    std::size_t hardware_seeds = 5;    ///< seeds averaged when a device has variation

    void check() const;
};

json to_json(const SearchSpace& s);
/// Throws ConfigError naming the offending key.
SearchSpace search_space_from_json(const json& j);

/// Fidelity against the bundle labels, averaged over `seeds` hardware seeds derived from
/// cfg.seed (one seed when nothing in the pipeline is random).
struct FidelityResult {
    double mean = 0.0;
    std::vector<double> per_seed;
    double standard_error() const;
};

FidelityResult cim_fidelity(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle,
                            std::size_t seeds, std::uint64_t seed_offset = 0);
/// Quantized-software fidelity (ideal hardware).
double software_fidelity(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle);

/// Hardware metrics of one point from an average-mode estimate.
struct HardwareSummary {
    Metrics metrics;
    double area_mm2 = 0.0;
    double energy_j = 0.0;
    double latency_s = 0.0;
};

HardwareSummary evaluate_hardware(const SimulationConfig& cfg, const Network& net, const ModelBundle& bundle);

/// True when a is preferred: higher TOPS/W, then smaller area, then higher TOPS.
bool better(const HardwareSummary& a, const HardwareSummary& b);

/// Smallest p in [p_min, p_max] whose mean fidelity reaches baseline - tolerance (linear scan).
std::optional<int> minimal_adc_precision(const SimulationConfig& point, const Network& net, const ModelBundle& bundle,
                                         double baseline, double tolerance, int p_min, int p_max,
                                         std::size_t seeds = 5);

/// Configuration with every non-ideality removed: infinite on/off ratio, no variation, ideal ADC.
SimulationConfig ideal_hardware(SimulationConfig cfg);

struct EvalEntry {
    std::string stage;  ///< "A", "B", "C" or "verify"
    json point;         ///< scheme, bits, design, cell_bits, adc_precision, device
    double fidelity = 0.0;
    std::vector<double> per_seed;
    bool feasible = false;
    std::optional<HardwareSummary> hardware;
    std::string note;
};

struct StageChoice {
    SimulationConfig cfg;
    double fidelity = 0.0;
    HardwareSummary hardware;
};

struct DSEResult {
    double baseline = 1.0;     ///< full-precision fidelity
    double quant_baseline = 1.0;  ///< ideal-hardware fidelity of the stage A choice, used by stages B and C
    StageChoice stage_a, stage_b, stage_c;
    SimulationConfig final_cfg;
    double final_fidelity = 0.0;
    double reverified_fidelity = 0.0;
    double reverified_stderr = 0.0;
    bool reverified = false;
    std::vector<EvalEntry> log;
};

/// Greedy three-stage search. Throws DomainError naming the stage when nothing is feasible.
DSEResult explore(const SearchSpace& space, const ModelBundle& bundle, const SimulationConfig& base);

json to_json(const EvalEntry& e);
json to_json(const DSEResult& r);
/// Per-stage tables of the evaluation log.
std::string render_dse_tables(const DSEResult& r);

}  // namespace cimsim
