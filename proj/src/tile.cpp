#include "cimsim/tile.hpp"

#include "cimsim/error.hpp"

#include <map>

namespace cimsim {

std::vector<std::pair<SlotMask, std::size_t>> TilePlan::mask_groups() const {
    std::map<SlotMask, std::size_t> counts;
    for (const auto& s : slots) ++counts[s.mask];
    return {counts.begin(), counts.end()};
}

TilePlan tile(std::size_t r, std::size_t c, std::size_t sub_rows, std::size_t sub_cols, Design design, int n, int k) {
    if (r == 0 || c == 0) throw DomainError("cannot tile an empty matrix");
    if (sub_rows == 0 || sub_cols == 0) throw DomainError("subarray size must be positive");
    TilePlan plan;
    plan.rows_total = r;
    plan.cols_total = c;
    plan.subarray_rows = sub_rows;
    plan.subarray_cols = sub_cols;
    plan.design = design;
    plan.weight_bits = n;
    plan.cell_bits = k;
    plan.cols_per_weight = columns_per_weight(design, n, k);
    plan.extra_cols = extra_columns(design);
    plan.arrays_per_slot = design == Design::Design2 ? 2 : 1;
    const auto usable = static_cast<long long>(sub_cols) - plan.extra_cols;
    if (usable < plan.cols_per_weight) throw DomainError("subarray too narrow for one weight's digit columns");
    plan.weights_per_slot = static_cast<std::size_t>(usable) / static_cast<std::size_t>(plan.cols_per_weight);
    plan.bands = (r + sub_rows - 1) / sub_rows;
    plan.column_slots = (c + plan.weights_per_slot - 1) / plan.weights_per_slot;

    for (std::size_t b = 0; b < plan.bands; ++b) {
        for (std::size_t cs = 0; cs < plan.column_slots; ++cs) {
            Slot s;
            s.band = b;
            s.column_slot = cs;
            s.row_begin = b * sub_rows;
            s.weight_begin = cs * plan.weights_per_slot;
            s.weight_count = std::min(plan.weights_per_slot, c - s.weight_begin);
            s.mask.used_rows = plan.band_rows(b);
            s.mask.used_cols = s.weight_count * static_cast<std::size_t>(plan.cols_per_weight) +
                               static_cast<std::size_t>(plan.extra_cols);
            if (design == Design::Design2) {
                s.polarity = Polarity::Positive;
                plan.slots.push_back(s);
                s.polarity = Polarity::Negative;
            }
            plan.slots.push_back(s);
        }
    }
    return plan;
}

TilePlan tile(std::size_t r, std::size_t c, const ArchConfig& arch, const MappingConfig& mapping, int n, int k) {
    return tile(r, c, arch.subarray_rows, arch.subarray_cols, mapping.design, n, k);
}

}  // namespace cimsim
