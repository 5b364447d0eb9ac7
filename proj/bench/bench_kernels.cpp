// Serial reference vs OpenMP kernel, and trace vs average estimation.

#include "cimsim/cimkernel.hpp"
#include "cimsim/hwperf.hpp"
#include "cimsim/netgraph.hpp"

#include <benchmark/benchmark.h>

using namespace cimsim;

namespace {

QuantizedTensor random_ints(Rng& rng, std::size_t rows, std::size_t cols, int bits, Signedness sign) {
    QuantizedTensor q;
    q.shape = {rows, cols};
    q.params = {QuantScheme::UniformSymmetric, bits, 1.0, sign};
    const std::int32_t lo = q.params.qmin(), hi = q.params.qmax();
    q.values.resize(rows * cols);
    for (auto& v : q.values) v = lo + static_cast<std::int32_t>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
    return q;
}

struct KernelSetup {
    ProgrammedWeights pw;
    QuantizedTensor x;
    AdcBank bank;
};

KernelSetup kernel_setup(std::size_t size, Design design) {
    PipelineConfig p;
    p.design = design;
    p.cell_bits = 2;
    p.device.on_off_ratio = 17.0;
    p.device.sigma_cell = 0.05;
    Rng rng(42);
    KernelSetup s;
    s.pw = program_weights(random_ints(rng, size, size, 8, Signedness::Signed), p, rng);
    s.x = random_ints(rng, 64, size, 8, Signedness::Unsigned);
    AdcSamples samples;
    collect_adc_samples(s.pw, s.x, default_adc_sample_cap(), samples);
    s.bank = make_adc_bank(p, s.pw.groups, &samples);
    return s;
}

void run_kernel(benchmark::State& state, ExecPolicy policy) {
    const auto design = static_cast<Design>(state.range(1));
    const KernelSetup s = kernel_setup(static_cast<std::size_t>(state.range(0)), design);
    for (auto _ : state) benchmark::DoNotOptimize(run_matmul(s.pw, s.x, s.bank, policy));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.x.shape[0] * s.pw.digits.rows * s.pw.digits.cols));
}

void BM_MatmulSerial(benchmark::State& state) { run_kernel(state, ExecPolicy::Serial); }
void BM_MatmulParallel(benchmark::State& state) { run_kernel(state, ExecPolicy::Parallel); }

const auto kKernelArgs = [](benchmark::internal::Benchmark* b) {
    for (int size : {128, 256, 512})
        for (int d : {0, 1, 2}) b->Args({size, d});
    b->Unit(benchmark::kMillisecond);
};

BENCHMARK(BM_MatmulSerial)->Apply(kKernelArgs);
BENCHMARK(BM_MatmulParallel)->Apply(kKernelArgs);

struct EstimateSetup {
    ChipPlan chip;
    CimRun run;
};

const EstimateSetup& estimate_setup() {
    static const EstimateSetup s = [] {
        const ModelBundle b = synth_model(1, builtin_arch("tiny-cnn"), {256});
        const Network net = build_network(b);
        SimulationConfig cfg;
        cfg.device.on_off_ratio = 17.0;
        cfg.device.sigma_cell = 0.05;
        return EstimateSetup{build_chip(net, cfg), run_cim(net, b.inputs, cfg, {.keep_traces = true})};
    }();
    return s;
}

void BM_EstimateTrace(benchmark::State& state) {
    const auto& s = estimate_setup();
    for (auto _ : state) benchmark::DoNotOptimize(estimate_trace(s.chip, s.run.sites));
}

void BM_EstimateAverage(benchmark::State& state) {
    const auto& s = estimate_setup();
    for (auto _ : state) benchmark::DoNotOptimize(estimate_average(s.chip, s.run.sites));
}

BENCHMARK(BM_EstimateTrace)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EstimateAverage)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
