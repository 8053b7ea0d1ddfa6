#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

// Seeded randomness helpers. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard); the bounded draws and the shuffle are
// spelled out here because std::uniform_int_distribution and std::shuffle are
// implementation-defined and would break cross-platform reproducibility.
namespace nbcloze {

using Rng = std::mt19937_64;

// Uniform integer in [0, n) via rejection sampling, n >= 1.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Fisher-Yates.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_below(rng, i)]);
    }
}

// FNV-1a 64. Used for content-keyed deterministic weights and file hashes;
// std::hash is implementation-defined.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace nbcloze
