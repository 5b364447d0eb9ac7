#include "cimsim/cimkernel.hpp"

#include "cimsim/error.hpp"
#include "cimsim/numeric.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cimsim {
namespace {

// Which planes feed each ADC group.
struct GroupPlanes {
    int positive = -1;
    int negative = -1;  // Design2 only
    std::int64_t weight = 1;
};

struct Layout {
    std::vector<GroupPlanes> groups;
    int dummy = -1;
    int dummy_group = 0;
    std::int64_t dummy_weight = 0;
};

Layout make_layout(const ProgrammedWeights& pw) {
    Layout out;
    out.groups.resize(static_cast<std::size_t>(pw.groups));
    const auto& planes = pw.digits.planes;
    for (std::size_t j = 0; j < planes.size(); ++j) {
        const auto& p = planes[j];
        if (p.dummy) {
            out.dummy = static_cast<int>(j);
            out.dummy_group = p.group;
            out.dummy_weight = p.weight;
            continue;
        }
        auto& g = out.groups.at(static_cast<std::size_t>(p.group));
        if (p.polarity == Polarity::Negative) {
            g.negative = static_cast<int>(j);
        } else {
            g.positive = static_cast<int>(j);
            g.weight = p.weight;
        }
    }
    return out;
}

InputSignMode sign_mode_of(const QuantizedTensor& x) {
    return x.params.signedness == Signedness::Unsigned ? InputSignMode::UnsignedBitSerial
                                                       : InputSignMode::TwosComplementBitSerial;
}

void check_inputs(const ProgrammedWeights& pw, const QuantizedTensor& x) {
    if (x.shape.size() != 2) throw ShapeError("CIM inputs must be a matrix");
    if (x.shape[1] != pw.plan.rows_total)
        throw ShapeError("input width " + std::to_string(x.shape[1]) + " does not match weight rows " +
                         std::to_string(pw.plan.rows_total));
    const int m = x.params.bits;
    const bool twos = sign_mode_of(x) == InputSignMode::TwosComplementBitSerial;
    const std::int64_t lo = twos ? -(std::int64_t{1} << (m - 1)) : 0;
    const std::int64_t hi = twos ? (std::int64_t{1} << (m - 1)) - 1 : (std::int64_t{1} << m) - 1;
    for (auto v : x.values) {
        if (v < lo || v > hi) {
            throw DomainError(v < 0 && !twos ? "negative input in unsigned bit-serial mode"
                                             : "input " + std::to_string(v) + " outside bit-serial range");
        }
    }
}

std::uint32_t input_mask(int m) { return m >= 32 ? ~0u : (1u << m) - 1; }

// Column sums of one plane over the active rows, accumulated row by row.
void sum_rows(const CellArray& cells, std::span<const std::uint32_t> active, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t n = cells.cols;
    for (auto i : active) {
        const double* row = cells.excess_row(i);
        double* o = out.data();
        for (std::size_t c = 0; c < n; ++c) o[c] += row[c];
    }
}

// Analog path for one input vector over every band and cycle. `sink(group, value)`
// receives each corrected column value and returns what gets accumulated.
template <class Sink>
void vector_pass(const ProgrammedWeights& pw, const Layout& layout, const OffsetCancellation mode,
                 std::span<const std::int32_t> xrow, std::span<const std::int64_t> cw, double* y,
                 std::uint32_t* active_out, std::vector<std::uint32_t>& active, std::vector<double>& pos,
                 std::vector<double>& neg, std::vector<double>& dummy, Sink&& sink) {
    const auto& plan = pw.plan;
    const std::size_t cols = plan.cols_total;
    const int cycles = static_cast<int>(cw.size());
    const std::uint32_t mask = input_mask(cycles);
    const bool diff = plan.design == Design::Design2;

    for (std::size_t b = 0; b < plan.bands; ++b) {
        const std::size_t r0 = plan.band_row_begin(b);
        const std::size_t r1 = r0 + plan.band_rows(b);
        for (int t = 0; t < cycles; ++t) {
            active.clear();
            for (std::size_t i = r0; i < r1; ++i)
                if (((static_cast<std::uint32_t>(xrow[i]) & mask) >> t) & 1u) active.push_back(static_cast<std::uint32_t>(i));
            if (active_out) active_out[static_cast<std::size_t>(t) * plan.bands + b] = static_cast<std::uint32_t>(active.size());
            // the array offset contributes a * offset to every column; cancellation removes its estimate
            const double offset_term = static_cast<double>(active.size()) * pw.offset;
            const double residual = offset_term - offset_estimate(plan.design, mode, active.size(), pw.offset);

            for (std::size_t g = 0; g < layout.groups.size(); ++g) {
                const auto& gp = layout.groups[g];
                sum_rows(pw.cells[static_cast<std::size_t>(gp.positive)], active, pos);
                const double w = static_cast<double>(cw[static_cast<std::size_t>(t)] * gp.weight);
                if (diff) {
                    // both arrays carry the same offset term, so the difference drops it
                    sum_rows(pw.cells[static_cast<std::size_t>(gp.negative)], active, neg);
                    for (std::size_t c = 0; c < cols; ++c) y[c] += w * sink(static_cast<int>(g), pos[c] - neg[c]);
                } else {
                    for (std::size_t c = 0; c < cols; ++c) y[c] += w * sink(static_cast<int>(g), pos[c] + residual);
                }
            }
            if (layout.dummy >= 0) {
                sum_rows(pw.cells[static_cast<std::size_t>(layout.dummy)], active, dummy);
                const double w = static_cast<double>(cw[static_cast<std::size_t>(t)] * layout.dummy_weight);
                for (std::size_t cs = 0; cs < plan.column_slots; ++cs) {
                    const double v = w * sink(layout.dummy_group, dummy[cs] + residual);
                    const std::size_t c0 = cs * plan.weights_per_slot;
                    const std::size_t c1 = std::min(cols, c0 + plan.weights_per_slot);
                    for (std::size_t c = c0; c < c1; ++c) y[c] += v;
                }
            }
        }
    }
}

std::uint64_t conversions_per_cycle(const TilePlan& plan, std::size_t adc_share) {
    std::uint64_t n = 0;
    for (const auto& s : plan.slots) n += (s.mask.used_cols + adc_share - 1) / adc_share;
    return n;
}

struct Converter {
    const AdcBank& bank;
    double operator()(int g, double v) const {
        return bank.bypass ? v : adc_convert(v, bank.groups[static_cast<std::size_t>(g)]);
    }
};

MatmulOutput prepare_output(const ProgrammedWeights& pw, const QuantizedTensor& x, const AdcBank& bank) {
    check_inputs(pw, x);
    if (!bank.bypass && bank.groups.size() != static_cast<std::size_t>(pw.groups))
        throw DomainError("ADC bank does not match the weight groups");
    MatmulOutput out;
    out.vectors = x.shape[0];
    out.cols = pw.plan.cols_total;
    out.acc.assign(out.vectors * out.cols, 0.0);
    out.scale = x.params.scale * pw.weight_params.scale;
    out.trace.vectors = out.vectors;
    out.trace.cycles = x.params.bits;
    out.trace.bands = pw.plan.bands;
    out.trace.active.assign(out.vectors * static_cast<std::size_t>(x.params.bits) * pw.plan.bands, 0);
    return out;
}

MatmulOutput run_parallel(const ProgrammedWeights& pw, const QuantizedTensor& x, const AdcBank& bank,
                          OffsetCancellation mode) {
    MatmulOutput out = prepare_output(pw, x, bank);
    const Layout layout = make_layout(pw);
    const auto cw = cycle_weights(x.params.bits, sign_mode_of(x));
    const std::size_t rows = pw.plan.rows_total;
    const std::size_t cols = pw.plan.cols_total;
    const auto n = static_cast<std::int64_t>(out.vectors);
    const Converter convert{bank};
    const std::size_t trace_stride = static_cast<std::size_t>(x.params.bits) * pw.plan.bands;

#pragma omp parallel
    {
        std::vector<std::uint32_t> active;
        active.reserve(pw.plan.subarray_rows);
        std::vector<double> pos(cols), neg(cols), dummy(pw.plan.column_slots);
#pragma omp for schedule(static)
        for (std::int64_t v = 0; v < n; ++v) {
            const auto vi = static_cast<std::size_t>(v);
            vector_pass(pw, layout, mode, std::span<const std::int32_t>(x.values.data() + vi * rows, rows), cw,
                        out.acc.data() + vi * cols, out.trace.active.data() + vi * trace_stride, active, pos, neg,
                        dummy, convert);
        }
    }
    return out;
}

// Reference path: walks each physical subarray and each of its used columns separately.
MatmulOutput run_serial(const ProgrammedWeights& pw, const QuantizedTensor& x, const AdcBank& bank,
                        OffsetCancellation mode) {
    MatmulOutput out = prepare_output(pw, x, bank);
    const Layout layout = make_layout(pw);
    const auto cw = cycle_weights(x.params.bits, sign_mode_of(x));
    const auto& plan = pw.plan;
    const std::size_t rows = plan.rows_total;
    const std::size_t cols = plan.cols_total;
    const std::uint32_t mask = input_mask(x.params.bits);
    const Converter convert{bank};

    auto column_sum = [&](int plane, const std::vector<std::size_t>& active, std::size_t col) {
        const auto& cells = pw.cells[static_cast<std::size_t>(plane)];
        double s = 0.0;
        for (auto i : active) s += cells.excess[i * cells.cols + col];
        return s;
    };

    for (std::size_t v = 0; v < out.vectors; ++v) {
        const std::int32_t* xrow = x.values.data() + v * rows;
        double* y = out.acc.data() + v * cols;
        for (std::size_t b = 0; b < plan.bands; ++b) {
            for (int t = 0; t < x.params.bits; ++t) {
                std::vector<std::size_t> active;
                for (std::size_t i = plan.band_row_begin(b); i < plan.band_row_begin(b) + plan.band_rows(b); ++i)
                    if (((static_cast<std::uint32_t>(xrow[i]) & mask) >> t) & 1u) active.push_back(i);
                out.trace.active[(v * static_cast<std::size_t>(x.params.bits) + static_cast<std::size_t>(t)) * plan.bands + b] =
                    static_cast<std::uint32_t>(active.size());
                const double offset_term = static_cast<double>(active.size()) * pw.offset;
                const double residual = offset_term - offset_estimate(plan.design, mode, active.size(), pw.offset);

                for (const auto& slot : plan.slots) {
                    if (slot.band != b || slot.polarity == Polarity::Negative) continue;
                    std::vector<double> pos, neg;
                    for (std::size_t c = slot.weight_begin; c < slot.weight_begin + slot.weight_count; ++c) {
                        for (std::size_t g = 0; g < layout.groups.size(); ++g) {
                            const auto& gp = layout.groups[g];
                            const double w = static_cast<double>(cw[static_cast<std::size_t>(t)] * gp.weight);
                            double value = column_sum(gp.positive, active, c);
                            if (plan.design == Design::Design2) {
                                value -= column_sum(gp.negative, active, c);
                            } else {
                                value += residual;
                            }
                            y[c] += w * convert(static_cast<int>(g), value);
                        }
                    }
                    if (layout.dummy >= 0) {
                        const double value = column_sum(layout.dummy, active, slot.column_slot) + residual;
                        const double w = static_cast<double>(cw[static_cast<std::size_t>(t)] * layout.dummy_weight);
                        const double contrib = w * convert(layout.dummy_group, value);
                        for (std::size_t c = slot.weight_begin; c < slot.weight_begin + slot.weight_count; ++c) y[c] += contrib;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace

double ProgrammedWeights::slot_g_mean(std::size_t s) const {
    const auto& m = plan.slots.at(s).mask;
    const double cells_used = static_cast<double>(m.used_rows * m.used_cols);
    return cells_used > 0 ? slot_g_sum.at(s) / cells_used : 0.0;
}

ProgrammedWeights program_weights(const QuantizedTensor& w, const PipelineConfig& cfg, Rng& rng) {
    if (w.shape.size() != 2) throw ShapeError("weights must be a matrix");
    if (w.params.signedness != Signedness::Signed) throw DomainError("weights must be signed");
    ProgrammedWeights pw;
    pw.plan = tile(w.shape[0], w.shape[1], cfg.subarray_rows, cfg.subarray_cols, cfg.design, w.params.bits,
                   cfg.cell_bits);
    pw.digits = decompose_weights(w, cfg.design, cfg.cell_bits, pw.plan.column_slots);
    pw.cells = program_array(pw.digits, cfg.device, rng);
    pw.weight_params = w.params;
    pw.offset = cell_offset(cfg.device, cfg.cell_bits);
    pw.groups = adc_group_count(cfg.design, w.params.bits, cfg.cell_bits);
    pw.offset_cancellation = cfg.offset_cancellation;
    pw.adc_share = cfg.adc_share;

    pw.slot_g_sum.assign(pw.plan.slots.size(), 0.0);
    for (std::size_t s = 0; s < pw.plan.slots.size(); ++s) {
        const auto& slot = pw.plan.slots[s];
        CompensatedSum acc;
        for (std::size_t j = 0; j < pw.digits.planes.size(); ++j) {
            const auto& plane = pw.digits.planes[j];
            const auto& cells = pw.cells[j];
            if (cfg.design == Design::Design2 && plane.polarity != slot.polarity) continue;
            const std::size_t c0 = plane.dummy ? slot.column_slot : slot.weight_begin;
            const std::size_t c1 = plane.dummy ? c0 + 1 : c0 + slot.weight_count;
            for (std::size_t r = slot.row_begin; r < slot.row_begin + slot.mask.used_rows; ++r)
                for (std::size_t c = c0; c < c1; ++c) acc.add(cells.g(r, c));
        }
        pw.slot_g_sum[s] = acc.value();
    }
    return pw;
}

double offset_estimate(Design design, OffsetCancellation mode, std::size_t active, double offset) {
    if (design == Design::Design2 || mode == OffsetCancellation::None) return 0.0;
    return static_cast<double>(active) * offset;
}

std::vector<double> offset_cancel(std::span<const double> sums, std::span<const double> negative, Design design,
                                  OffsetCancellation mode, std::size_t active, int k, double ratio) {
    std::vector<double> out(sums.begin(), sums.end());
    if (design == Design::Design2) {
        if (negative.size() != sums.size()) throw ShapeError("Design2 cancellation needs matching negative sums");
        for (std::size_t c = 0; c < out.size(); ++c) out[c] -= negative[c];
        return out;
    }
    DeviceModel dev;
    dev.on_off_ratio = ratio;
    dev.cell_bits_max = 8;
    const double est = offset_estimate(design, mode, active, cell_offset(dev, k));
    for (auto& v : out) v -= est;
    return out;
}

std::size_t default_adc_sample_cap() { return std::size_t{1} << 20; }

void collect_adc_samples(const ProgrammedWeights& pw, const QuantizedTensor& x, std::size_t cap, AdcSamples& into) {
    check_inputs(pw, x);
    if (into.groups.size() < static_cast<std::size_t>(pw.groups)) into.groups.resize(static_cast<std::size_t>(pw.groups));
    const std::size_t vectors = x.shape[0];
    if (vectors == 0 || cap == 0) return;
    const Layout layout = make_layout(pw);
    const auto cw = cycle_weights(x.params.bits, sign_mode_of(x));
    const std::size_t per_vector =
        static_cast<std::size_t>(x.params.bits) * pw.plan.bands * pw.plan.cols_total;
    const std::size_t wanted_vectors = std::max<std::size_t>(1, cap / std::max<std::size_t>(1, per_vector));
    const std::size_t stride = std::max<std::size_t>(1, (vectors + wanted_vectors - 1) / wanted_vectors);

    const std::size_t rows = pw.plan.rows_total;
    std::vector<double> scratch_y(pw.plan.cols_total);
    std::vector<std::uint32_t> active;
    std::vector<double> pos(pw.plan.cols_total), neg(pw.plan.cols_total), dummy(pw.plan.column_slots);
    auto record = [&](int g, double v) {
        into.groups[static_cast<std::size_t>(g)].push_back(v);
        return 0.0;
    };
    for (std::size_t v = 0; v < vectors; v += stride)
        vector_pass(pw, layout, pw.offset_cancellation, std::span<const std::int32_t>(x.values.data() + v * rows, rows),
                    cw, scratch_y.data(), nullptr, active, pos, neg, dummy, record);
}

std::pair<double, double> default_linear_range(Design design, int k, std::size_t rows) {
    const double hi = static_cast<double>(std::min<std::size_t>(rows, 64)) * static_cast<double>((1 << k) - 1);
    return {design == Design::Design2 ? -hi : 0.0, hi};
}

AdcBank make_adc_bank(const PipelineConfig& cfg, int groups, const AdcSamples* samples) {
    AdcBank bank;
    const auto n = static_cast<std::size_t>(groups);
    switch (cfg.adc.kind) {
        case AdcKind::Ideal: bank.bypass = true; break;
        case AdcKind::Custom:
            if (!cfg.custom_adc) throw DomainError("custom ADC selected without a loaded spec");
            bank.groups.assign(n, *cfg.custom_adc);
            break;
        case AdcKind::Linear: {
            auto [lo, hi] = default_linear_range(cfg.design, cfg.cell_bits, cfg.subarray_rows);
            bank.groups.assign(n, build_linear_adc(cfg.adc.precision, cfg.adc.lo.value_or(lo), cfg.adc.hi.value_or(hi)));
            break;
        }
        case AdcKind::Calibrated: {
            auto [lo, hi] = default_linear_range(cfg.design, cfg.cell_bits, cfg.subarray_rows);
            for (std::size_t g = 0; g < n; ++g) {
                if (samples && g < samples->groups.size() && !samples->groups[g].empty())
                    bank.groups.push_back(fit_adc(samples->groups[g], cfg.adc.precision));
                else
                    bank.groups.push_back(build_linear_adc(cfg.adc.precision, lo, hi));
            }
            break;
        }
    }
    return bank;
}

Tensor MatmulOutput::dequantized() const {
    Tensor t;
    t.shape = {vectors, cols};
    t.data.resize(acc.size());
    for (std::size_t e = 0; e < acc.size(); ++e) t.data[e] = static_cast<float>(acc[e] * scale);
    return t;
}

MatmulOutput run_matmul(const ProgrammedWeights& pw, const QuantizedTensor& x, const AdcBank& bank, ExecPolicy policy) {
    const OffsetCancellation mode = pw.offset_cancellation;
    MatmulOutput out = policy == ExecPolicy::Serial ? run_serial(pw, x, bank, mode) : run_parallel(pw, x, bank, mode);
    out.trace.conversions = static_cast<std::uint64_t>(out.vectors) * static_cast<std::uint64_t>(x.params.bits) *
                            conversions_per_cycle(pw.plan, pw.adc_share);
    return out;
}

MatmulOutput cim_matmul(const QuantizedTensor& x, const QuantizedTensor& w, const PipelineConfig& cfg, Rng& rng,
                        ExecPolicy policy) {
    const ProgrammedWeights pw = program_weights(w, cfg, rng);
    AdcSamples samples;
    if (cfg.adc.kind == AdcKind::Calibrated) collect_adc_samples(pw, x, default_adc_sample_cap(), samples);
    return run_matmul(pw, x, make_adc_bank(cfg, pw.groups, &samples), policy);
}

MatmulOutput integer_matmul(const QuantizedTensor& x, const QuantizedTensor& w) {
    if (x.shape.size() != 2 || w.shape.size() != 2 || x.shape[1] != w.shape[0])
        throw ShapeError("matmul operand shapes do not agree");
    const std::size_t v = x.shape[0], r = x.shape[1], c = w.shape[1];
    MatmulOutput out;
    out.vectors = v;
    out.cols = c;
    out.scale = x.params.scale * w.params.scale;
    out.acc.assign(v * c, 0.0);
    std::vector<std::int64_t> row(c);
    for (std::size_t i = 0; i < v; ++i) {
        std::fill(row.begin(), row.end(), 0);
        for (std::size_t k = 0; k < r; ++k) {
            const std::int64_t xv = x.values[i * r + k];
            if (xv == 0) continue;
            const std::int32_t* wr = w.values.data() + k * c;
            for (std::size_t j = 0; j < c; ++j) row[j] += xv * wr[j];
        }
        for (std::size_t j = 0; j < c; ++j) out.acc[i * c + j] = static_cast<double>(row[j]);
    }
    return out;
}

}  // namespace cimsim
