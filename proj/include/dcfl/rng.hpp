#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dcfl {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic sub-seed for an independent stream identified by `tags`.
/// Streams in use: (seed, kStream*, ...) as listed below.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = splitmix64(master);
    for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
    return Rng(derive_seed(master, tags));
}

// Stream tags.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamPartition = 2;
inline constexpr std::uint64_t kStreamSelect = 3;
inline constexpr std::uint64_t kStreamClient = 4;
inline constexpr std::uint64_t kStreamCondense = 5;
inline constexpr std::uint64_t kStreamPretrain = 6;
inline constexpr std::uint64_t kStreamServerTrain = 7;
inline constexpr std::uint64_t kStreamProbe = 8;
inline constexpr std::uint64_t kStreamData = 9;

/// Uniform integer in [0, n) without relying on the libstdc++
/// uniform_int_distribution algorithm staying fixed.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t range = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v;
    do { v = rng(); } while (v >= limit);
    return static_cast<std::size_t>(v % range);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Fisher-Yates shuffle on top of uniform_index (std::shuffle's draw
/// sequence is library-specific).
template <typename It>
void shuffle(It first, It last, Rng& rng) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(first[i - 1], first[j]);
    }
}

}  // namespace dcfl
