#pragma once

#include <cstdint>
#include <string_view>

namespace dtbsm {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives an independent child seed:
///   child = mix64(mix64(parent ^ fnv1a64(component)) + index)
/// Every random consumer in the pipeline gets its seed this way, so a single
/// top-level seed fixes all downstream randomness.
constexpr std::uint64_t split_seed(std::uint64_t parent, std::string_view component,
                                   std::uint64_t index = 0) noexcept {
    return mix64(mix64(parent ^ fnv1a64(component)) + index);
}

/// Explicit-state SplitMix64 generator. The whole state is one 64-bit word,
/// which makes draws pure functions of the state value and keeps streams
/// reproducible across standard libraries.
struct RngState {
    std::uint64_t state = 0;

    std::uint64_t next_u64() noexcept {
        state += 0x9e3779b97f4a7c15ULL;
        return mix64(state);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Multiply-shift; bias is below 2^-53 for the sizes used here.
    std::uint64_t below(std::uint64_t n) noexcept {
        const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept;
};

}  // namespace dtbsm
