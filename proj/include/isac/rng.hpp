#pragma once

#include <cmath>
#include <cstdint>

#include "isac/geometry.hpp"

namespace isac {

/// Deterministic 64-bit stream generator (splitmix64). Used instead of
/// std::mt19937 + std::normal_distribution so that streams are bit-identical
/// across platforms and standard libraries, and cheap to seed per snapshot.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    /// Standard normal via Box-Muller (one value per call; pairs are not cached
    /// so the stream position is a pure function of the call count).
    double next_normal() {
        double u1 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly symmetric complex Gaussian with E[|z|^2] = power.
    Complex next_complex_normal(double power) {
        const double s = std::sqrt(power / 2.0);
        const double re = next_normal();
        const double im = next_normal();
        return {s * re, s * im};
    }

private:
    std::uint64_t state_;
};

/// Order-free combiner for deriving per-(seed, snapshot, link) noise seeds.
inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
    return g.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t snapshot_index,
                                 std::uint64_t link_index) {
    return hash_combine(hash_combine(base, snapshot_index), link_index);
}

}  // namespace isac
