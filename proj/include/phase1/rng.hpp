#pragma once

// Random sources. The engine is std::mt19937_64 (bit-exact across
// platforms); per-run seeds come from a counter-based SplitMix64 split so
// that any run can be reproduced from (master seed, run index) alone.

#include <cstdint>
#include <random>

namespace phase1 {

using Rng = std::mt19937_64;

/// One SplitMix64 output step applied to `x`.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Purpose tags keep the streams drawn for one run independent.
enum class StreamTag : std::uint64_t {
    Thresholds = 1,
    Design = 2,
    Scenario = 3,
    Permutation = 4,
};

/// seed = splitmix64(splitmix64(master ^ splitmix64(index)) + tag)
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                    StreamTag tag) noexcept {
    return splitmix64(splitmix64(master ^ splitmix64(index)) + static_cast<std::uint64_t>(tag));
}

/// Uniform draw on the open interval (0,1) with 53 random bits.
inline double uniform_open01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace phase1
