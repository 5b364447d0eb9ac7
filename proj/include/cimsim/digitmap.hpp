#pragma once

#include "cimsim/config.hpp"
#include "cimsim/quant.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cimsim {

enum class Polarity { None, Positive, Negative };

/// One same-significance matrix of unsigned k-bit digits.
struct DigitPlane {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> digits;  ///< row-major rows x cols
    std::int64_t weight = 1;           ///< signed significance applied at assembly
    int group = 0;                     ///< digit position inside the array (selects the ADC)
    Polarity polarity = Polarity::None;
    bool dummy = false;                ///< constant-offset column (Design3)

    std::uint8_t at(std::size_t r, std::size_t c) const { return digits[r * cols + c]; }
};

/// Planes are ordered LSB first. Design1 appends the sign plane; Design2 lists all
/// positive planes before the negative ones; Design3 appends the dummy plane.
struct DigitPlanes {
    Design design = Design::Design1;
    int bits = 0;
    int cell_bits = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<DigitPlane> planes;

    std::size_t data_plane_count() const;
};

/// Number of non-dummy digit planes: Design1 1+ceil((N-1)/k), Design2 2*ceil(N/k), Design3 ceil(N/k).
int data_plane_count(Design design, int weight_bits, int cell_bits);
/// Number of ADC groups (distinct digit positions inside one array).
int adc_group_count(Design design, int weight_bits, int cell_bits);

/// Decomposes an R x C signed weight matrix. Design3's dummy plane is R x dummy_columns.
DigitPlanes decompose_weights(const QuantizedTensor& q, Design design, int cell_bits,
                              std::size_t dummy_columns = 1);

struct BitPlane {
    std::vector<std::uint8_t> bits;  ///< row-major, same shape as the input
    std::int64_t weight = 1;
};

/// Bit-serial input planes, LSB cycle first.
struct BitPlanes {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<BitPlane> planes;
};

/// Cycle significances: 2^t, with the MSB cycle negated in two's-complement mode.
std::vector<std::int64_t> cycle_weights(int input_bits, InputSignMode mode);
BitPlanes decompose_inputs(const QuantizedTensor& q, int input_bits, InputSignMode mode);

/// Per-(cycle, plane) partial sums, each an array of `size` elements.
template <class T>
struct PartialSums {
    std::size_t cycles = 0;
    std::size_t planes = 0;
    std::size_t size = 0;
    std::vector<T> values;

    PartialSums(std::size_t t, std::size_t j, std::size_t n) : cycles(t), planes(j), size(n), values(t * j * n) {}
    T& at(std::size_t t, std::size_t j, std::size_t e) { return values[(t * planes + j) * size + e]; }
    const T& at(std::size_t t, std::size_t j, std::size_t e) const { return values[(t * planes + j) * size + e]; }
};

/// y[e] = sum_t sum_j cycle_weight[t] * plane_weight[j] * partial[t][j][e].
template <class T>
std::vector<T> assemble(const PartialSums<T>& partials, std::span<const std::int64_t> cycle_weight,
                        std::span<const std::int64_t> plane_weight);

std::vector<std::int64_t> plane_weights(const DigitPlanes& planes);

}  // namespace cimsim
