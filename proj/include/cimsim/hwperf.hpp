#pragma once

#include "cimsim/config.hpp"
#include "cimsim/netgraph.hpp"
#include "cimsim/tile.hpp"

#include <string>
#include <vector>

namespace cimsim {

/// Cost split into the four reported categories.
struct Breakdown {
    double subarray = 0.0;
    double buffer = 0.0;
    double interconnect = 0.0;
    double digital = 0.0;

    double total() const { return subarray + buffer + interconnect + digital; }
    Breakdown& operator+=(const Breakdown& o);
    Breakdown scaled(double f) const;
    bool operator==(const Breakdown&) const = default;
};

Breakdown operator+(Breakdown a, const Breakdown& b);
/// The operand with the larger total (the first one on ties).
const Breakdown& max_by_total(const Breakdown& a, const Breakdown& b);

struct ReadCost {
    double latency = 0.0;  ///< s per read cycle
    double energy = 0.0;   ///< J per read cycle
};

/// One read cycle of one subarray with utilization `mask`, activity alpha and mean conductance g.
ReadCost subarray_read_cost(const SlotMask& mask, double alpha, double g, int adc_precision, std::size_t adc_share,
                            const CostParams& params);
/// The parts of subarray_read_cost that do not depend on alpha or g.
ReadCost subarray_static_cost(const SlotMask& mask, int adc_precision, std::size_t adc_share, const CostParams& params);

struct SitePlacement {
    MatmulSite site;
    TilePlan plan;
    DeviceModel device;
    int cell_bits = 0;
    int adc_precision = 0;
    std::size_t tiles = 0;
};

struct ChipPlan {
    std::vector<SitePlacement> sites;  ///< indexed like Network::sites
    std::vector<NetLayer> layers;      ///< stage structure, matrices dropped
    std::size_t subarray_rows = 0, subarray_cols = 0;
    std::size_t dmm_subarray_rows = 0, dmm_subarray_cols = 0;
    std::size_t subarrays_per_pe = 0, pes_per_tile = 0, adc_share = 0;
    std::size_t envm_tiles = 0;
    std::size_t sram_tiles = 0;
    double buffer_bits = 0.0;   ///< global buffer, sized to the largest activation footprint
    bool overlap_v_write = true;
    int input_bits = 0;
    double macs_per_sample = 0.0;
    CostParams cost;

    std::size_t tiles() const { return envm_tiles + sram_tiles; }
};

/// Static sites go to eNVM tiles and dynamic sites to SRAM tiles, each site on its own tiles.
ChipPlan build_chip(const Network& net, const SimulationConfig& cfg);

struct SiteReport {
    std::string name;
    SiteKind kind = SiteKind::Smm;
    DeviceKind tile_kind = DeviceKind::ENvm;
    std::size_t subarrays = 0;
    std::size_t tiles = 0;
    double activity = 0.0;        ///< sum of alpha * usedRows * usedCols * G over read cycles
    std::uint64_t conversions = 0;
    std::uint64_t cost_calls = 0;
    Breakdown area;               ///< mm^2
    Breakdown latency;            ///< s per inference
    Breakdown energy;             ///< J per inference
};

/// Composed latency of one pipeline stage (attention stage2 covers K/V writes, QK, softmax and PV).
struct StageReport {
    std::string layer;
    std::string stage;
    double latency = 0.0;  ///< s per inference
};

struct HardwareReport {
    static constexpr int kSchemaVersion = 1;
    EstimateMode mode = EstimateMode::Average;
    std::size_t samples = 0;
    double macs_per_inference = 0.0;
    Breakdown area;     ///< mm^2
    Breakdown latency;  ///< s per inference
    Breakdown energy;   ///< J per inference
    std::uint64_t cost_calls = 0;
    std::vector<SiteReport> sites;
    std::vector<StageReport> stages;
};

/// Uses every recorded vector and cycle with each slot's own mean conductance.
/// Throws DomainError when a site has no traces.
HardwareReport estimate_trace(const ChipPlan& plan, const std::vector<SiteRecord>& records);
/// Uses alpha_avg, G_avg and the utilization-mask groups of every site.
HardwareReport estimate_average(const ChipPlan& plan, const std::vector<SiteRecord>& records);
HardwareReport estimate(const ChipPlan& plan, const std::vector<SiteRecord>& records, EstimateMode mode);

struct Metrics {
    double tops = 0.0;
    double tops_per_w = 0.0;
    double tops_per_mm2 = 0.0;
};

/// Throws DomainError on zero latency, energy or area.
Metrics summarize(const HardwareReport& report);
Metrics summarize(double macs, double latency_s, double energy_j, double area_mm2);

json to_json(const Breakdown& b);
json to_json(const HardwareReport& report);
/// Throws FormatError on malformed input or a schema-version mismatch.
HardwareReport hardware_report_from_json(const json& j);
/// Fixed-width table: metrics rows plus per-category shares of area, latency and energy.
std::string render_text(const HardwareReport& report);

}  // namespace cimsim
