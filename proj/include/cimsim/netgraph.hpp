#pragma once

#include "cimsim/cimkernel.hpp"
#include "cimsim/config.hpp"
#include "cimsim/model.hpp"
#include "cimsim/numeric.hpp"
#include "cimsim/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace cimsim {

enum class SiteKind { Smm, Dmm };
enum class StageKind { Smm, Dmm, Digital };

std::string to_string(SiteKind);
std::string to_string(StageKind);

/// One matrix multiplication executed on CIM arrays.
struct MatmulSite {
    std::string name;                     ///< "conv1", "attn.q", "attn.qk.h0", ...
    SiteKind kind = SiteKind::Smm;
    std::string stage;                    ///< owning stage name
    std::size_t layer = 0;
    int head = -1;                        ///< attention head for DMM sites
    std::size_t rows = 0;                 ///< R, input features / stored-operand rows
    std::size_t cols = 0;                 ///< C, output features
    std::size_t vectors_per_sample = 0;   ///< input vectors per sample (per invocation for DMM)

    std::size_t macs_per_sample() const { return vectors_per_sample * rows * cols; }
};

struct Stage {
    std::string name;  ///< conv, linear, qkv, qk, softmax, pv, out_proj, ffn1, ffn2
    StageKind kind = StageKind::Smm;
    std::vector<std::size_t> sites;
};

struct NetLayer {
    LayerDesc desc;
    std::vector<std::size_t> in_shape;   ///< per sample
    std::vector<std::size_t> out_shape;  ///< per sample
    std::map<std::string, Tensor> matrices;  ///< R x C operands; conv weights im2col-lowered
    Tensor bias;                             ///< empty for attention blocks
    std::vector<Stage> stages;
    std::size_t digital_ops_per_sample = 0;  ///< bias, activation, softmax and residual element ops
};

struct Network {
    NetworkDesc desc;
    std::vector<NetLayer> layers;
    std::vector<MatmulSite> sites;

    std::size_t site_index(const std::string& name) const;
    std::size_t output_size() const;
    std::size_t macs_per_sample() const;
};

/// Stage order of an attention block.
std::vector<std::string> attention_stage_names();

/// Throws ShapeError on non-conforming shapes or missing weights, DomainError on an empty layer list.
Network build_network(const NetworkDesc& desc, const std::map<std::string, Tensor>& weights);
inline Network build_network(const ModelBundle& b) { return build_network(b.desc, b.weights); }

/// im2col for one batch [S, C, H, W]: rows (s, oy, ox), columns (c*k + ky)*k + kx.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Matmul provider for the forward pass.
class MatmulBackend {
public:
    virtual ~MatmulBackend() = default;
    /// x: V x R activations against static R x C weights.
    virtual Tensor smm(std::size_t site, const Tensor& x, const Tensor& w) = 0;
    /// One operand pair per invocation. `probabilities` marks softmax outputs in `xs`.
    virtual std::vector<Tensor> dmm(std::size_t site, const std::vector<Tensor>& xs, const std::vector<Tensor>& ws,
                                    bool probabilities) = 0;
};

Tensor run_forward(const Network& net, const Tensor& inputs, MatmulBackend& backend);

/// Full-precision forward pass.
Tensor run_reference(const Network& net, const Tensor& inputs);

/// Activation quantizer: unsigned when the mapping allows it and every value is nonnegative;
/// softmax outputs use a fixed unsigned range [0, 1].
QuantParams activation_params(const Tensor& x, const SimulationConfig& cfg, bool probabilities);

/// Quantized forward pass with exact integer matmuls.
Tensor run_software_quantized(const Network& net, const Tensor& inputs, const SimulationConfig& cfg);

/// Per-site activity statistics for average-mode estimation.
struct LayerStats {
    std::uint64_t vectors = 0;      ///< n, over all invocations
    int cycles = 0;                 ///< M
    std::size_t invocations = 0;
    std::uint64_t active_rows = 0;  ///< driven rows summed over vectors, cycles and bands
    std::uint64_t offered_rows = 0; ///< used rows summed over the same
    CompensatedSum g_sum;           ///< conductance over utilized cells of all arrays
    std::uint64_t cells = 0;
    std::vector<std::pair<SlotMask, std::size_t>> masks;  ///< per invocation

    double alpha_avg() const;
    double g_avg() const;
    void add_run(const ProgrammedWeights& pw, const MacTrace& trace);
};

struct InvocationTrace {
    MacTrace trace;
    std::vector<double> slot_g_mean;
};

struct SiteRecord {
    MatmulSite site;
    TilePlan plan;
    PipelineConfig pipeline;
    int input_bits = 0;
    LayerStats stats;
    std::vector<InvocationTrace> traces;  ///< kept only when requested
};

/// Pipeline settings for a site: static sites use the main device and array size, dynamic
/// sites the SRAM device, DMM array size and k = min(cell_bits, device limit).
PipelineConfig site_pipeline(const SimulationConfig& cfg, SiteKind kind);

/// Tile plan of a site without running it.
TilePlan site_plan(const MatmulSite& site, const SimulationConfig& cfg);

struct CimRunOptions {
    bool keep_traces = false;
    std::size_t adc_sample_cap = 0;  ///< 0 selects default_adc_sample_cap()
};

struct CimRun {
    Tensor outputs;
    std::vector<SiteRecord> sites;  ///< indexed like Network::sites
};

/// CIM forward pass. Weights are quantized once per site, activations per batch, dynamic
/// operands per invocation. All randomness derives from cfg.seed.
CimRun run_cim(const Network& net, const Tensor& inputs, const SimulationConfig& cfg, const CimRunOptions& opts = {});

/// Index of the largest entry of every sample (first one on ties).
std::vector<std::size_t> argmax_rows(const Tensor& outputs);
/// Fraction of samples whose argmax agrees.
double fidelity(const Tensor& outputs, const Tensor& reference);
double fidelity(const Tensor& outputs, const IntTensor& labels);

}  // namespace cimsim
