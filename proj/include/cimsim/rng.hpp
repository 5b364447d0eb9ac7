#pragma once

#include <cstdint>
#include <random>

namespace cimsim {

/// Seeded generator with platform-independent uniform and normal draws.
/// std::normal_distribution is implementation-defined, so normals use Box-Muller
/// over the (fully specified) mt19937_64 stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Independent child seed for a numbered stream (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace cimsim
