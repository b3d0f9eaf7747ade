#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace merit {

// Seeded generator shared by every randomized operation. Index and real draws
// are derived from raw 64-bit outputs so streams are identical across
// standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [0, n). Rejection-sampled, unbiased.
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform real in [0, 1) with 53 bits of resolution.
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    // Standard normal via Box-Muller.
    double normal();

    // k distinct values from [0, n), uniformly, in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Derive an independent child stream.
    Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
};

}  // namespace merit
