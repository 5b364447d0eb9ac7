#pragma once

#include "cimsim/config.hpp"
#include "cimsim/digitmap.hpp"

#include <compare>
#include <utility>
#include <vector>

namespace cimsim {

/// Used region of one subarray.
struct SlotMask {
    std::size_t used_rows = 0;
    std::size_t used_cols = 0;
    auto operator<=>(const SlotMask&) const = default;
};

/// One physical subarray of a plan.
struct Slot {
    std::size_t band = 0;          ///< row band index
    std::size_t column_slot = 0;   ///< column-slot index
    Polarity polarity = Polarity::None;
    std::size_t row_begin = 0;
    std::size_t weight_begin = 0;  ///< first logical output column held here
    std::size_t weight_count = 0;
    SlotMask mask;
};

/// Placement of an R x C weight matrix onto fixed-size subarrays. All digit columns of
/// one weight are adjacent (plane order as in DigitPlanes); Design3's dummy column is the
/// last used column of every slot; Design2 slots come in positive/negative pairs.
struct TilePlan {
    std::size_t rows_total = 0;    ///< R, input features
    std::size_t cols_total = 0;    ///< C, output features
    std::size_t subarray_rows = 0;
    std::size_t subarray_cols = 0;
    Design design = Design::Design1;
    int weight_bits = 0;
    int cell_bits = 0;
    int cols_per_weight = 0;
    int extra_cols = 0;
    int arrays_per_slot = 1;
    std::size_t bands = 0;
    std::size_t column_slots = 0;
    std::size_t weights_per_slot = 0;
    std::vector<Slot> slots;  ///< band-major, then column slot, then polarity

    std::size_t subarray_count() const noexcept { return slots.size(); }
    std::size_t band_row_begin(std::size_t b) const { return b * subarray_rows; }
    std::size_t band_rows(std::size_t b) const {
        return std::min(subarray_rows, rows_total - b * subarray_rows);
    }
    std::size_t column_slot_of(std::size_t weight_col) const { return weight_col / weights_per_slot; }
    /// Distinct masks with their multiplicities, ordered by mask.
    std::vector<std::pair<SlotMask, std::size_t>> mask_groups() const;
};

TilePlan tile(std::size_t rows, std::size_t cols, std::size_t subarray_rows, std::size_t subarray_cols, Design design,
              int weight_bits, int cell_bits);
TilePlan tile(std::size_t rows, std::size_t cols, const ArchConfig& arch, const MappingConfig& mapping,
              int weight_bits, int cell_bits);

}  // namespace cimsim
