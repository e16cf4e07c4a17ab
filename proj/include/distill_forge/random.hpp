#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace distill {

// std::mt19937_64's output sequence is fixed by the standard; the
// distributions in <random> are not, so the helpers below stay in-house to
// keep seeded runs identical across standard libraries.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for an independent stream, e.g. one per document index.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    return draw % n;
}

/// Uniform real in [0, 1) with 53 bits of resolution.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace distill
