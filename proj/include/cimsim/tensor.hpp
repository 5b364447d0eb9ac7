#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace cimsim {

inline std::size_t shape_product(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor.
template <class T>
struct BasicTensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    BasicTensor() = default;
    BasicTensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {}

    static BasicTensor zeros(std::vector<std::size_t> s) {
        const auto n = shape_product(s);
        return BasicTensor(std::move(s), std::vector<T>(n, T{}));
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    /// Row-major access for rank-2 tensors.
    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool operator==(const BasicTensor&) const = default;
};

using Tensor = BasicTensor<float>;
using IntTensor = BasicTensor<std::int32_t>;

enum class NpyDtype { Float32, Int32 };

/// NPY v1.0 byte encoding (little-endian, C order, header padded to 64 bytes).
std::string encode_npy(const Tensor& t);
std::string encode_npy(const IntTensor& t);

void write_npy(const std::filesystem::path& path, const Tensor& t);
void write_npy(const std::filesystem::path& path, const IntTensor& t);

NpyDtype npy_dtype(const std::filesystem::path& path);

/// Throws FormatError on bad magic, unsupported dtype or order, truncated payload,
/// or non-finite values.
Tensor read_tensor(const std::filesystem::path& path);
IntTensor read_int_tensor(const std::filesystem::path& path);

Tensor decode_npy_float(const std::string& bytes);
IntTensor decode_npy_int(const std::string& bytes);

}  // namespace cimsim
