#pragma once

#include "cimsim/analog.hpp"
#include "cimsim/config.hpp"
#include "cimsim/digitmap.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/rng.hpp"
#include "cimsim/tile.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cimsim {

/// Everything the analog pipeline needs for one matmul site.
struct PipelineConfig {
    Design design = Design::Design2;
    int cell_bits = 2;
    OffsetCancellation offset_cancellation = OffsetCancellation::DummyColumn;
    DeviceModel device;
    AdcConfig adc;
    std::optional<AdcSpec> custom_adc;  ///< loaded spec for adc.kind == custom
    std::size_t subarray_rows = 128;
    std::size_t subarray_cols = 128;
    std::size_t adc_share = 8;
};

/// Weights placed, decomposed and programmed once.
struct ProgrammedWeights {
    TilePlan plan;
    DigitPlanes digits;
    std::vector<CellArray> cells;      ///< one per plane, full R x C (dummy: R x column_slots)
    std::vector<double> slot_g_sum;    ///< conductance summed over each slot's used cells
    QuantParams weight_params;
    double offset = 0.0;
    int groups = 0;
    OffsetCancellation offset_cancellation = OffsetCancellation::DummyColumn;
    std::size_t adc_share = 8;

    double slot_g_mean(std::size_t s) const;
};

ProgrammedWeights program_weights(const QuantizedTensor& w, const PipelineConfig& cfg, Rng& rng);

/// Amount the cancellation path subtracts from a Design1/Design3 column sum with `active`
/// rows driven: active * offset for dummy-column cancellation, zero otherwise and for Design2.
double offset_estimate(Design design, OffsetCancellation mode, std::size_t active, double offset);

/// Offset-corrected column values. Design2 takes the negative-array sums in `negative`
/// and returns the difference; Design1/3 subtract the dummy-column estimate.
std::vector<double> offset_cancel(std::span<const double> sums, std::span<const double> negative, Design design,
                                  OffsetCancellation mode, std::size_t active, int cell_bits, double on_off_ratio);

/// One converter spec per ADC group; `bypass` passes analog values straight through.
struct AdcBank {
    bool bypass = false;
    std::vector<AdcSpec> groups;
};

/// Analog values seen by each ADC group, for calibration.
struct AdcSamples {
    std::vector<std::vector<double>> groups;
};

/// Appends analog values from an evenly strided subset of the vectors, at most
/// `cap` values per group.
void collect_adc_samples(const ProgrammedWeights& pw, const QuantizedTensor& x, std::size_t cap, AdcSamples& into);

std::size_t default_adc_sample_cap();

/// Builds converters for the configured ADC kind. `samples` is required for calibrated ADCs.
AdcBank make_adc_bank(const PipelineConfig& cfg, int groups, const AdcSamples* samples);

/// Default linear full scale: [0, min(rows, 64) * (2^k - 1)], mirrored for Design2.
std::pair<double, double> default_linear_range(Design design, int cell_bits, std::size_t subarray_rows);

/// Per-run activity record.
struct MacTrace {
    std::size_t vectors = 0;
    int cycles = 0;
    std::size_t bands = 0;
    std::vector<std::uint32_t> active;  ///< [vector][cycle][band] driven rows
    std::uint64_t conversions = 0;

    std::uint32_t active_rows(std::size_t v, int t, std::size_t b) const {
        return active[(v * static_cast<std::size_t>(cycles) + static_cast<std::size_t>(t)) * bands + b];
    }
};

struct MatmulOutput {
    std::size_t vectors = 0;
    std::size_t cols = 0;
    std::vector<double> acc;  ///< integer-domain accumulators, vectors x cols
    double scale = 1.0;       ///< s_x * s_w
    MacTrace trace;

    Tensor dequantized() const;
};

enum class ExecPolicy { Serial, Parallel };

/// Runs x (V x R) through the programmed arrays. Parallel splits the vectors across
/// threads; Serial walks the physical subarrays one at a time. Both give identical bits.
MatmulOutput run_matmul(const ProgrammedWeights& pw, const QuantizedTensor& x, const AdcBank& bank,
                        ExecPolicy policy = ExecPolicy::Parallel);

/// program + calibrate + run in one call.
MatmulOutput cim_matmul(const QuantizedTensor& x, const QuantizedTensor& w, const PipelineConfig& cfg, Rng& rng,
                        ExecPolicy policy = ExecPolicy::Parallel);

/// Software reference in the same accumulator form: acc = sum_i x_i * w_ij, dequantized by s_x * s_w.
MatmulOutput integer_matmul(const QuantizedTensor& x, const QuantizedTensor& w);

}  // namespace cimsim
