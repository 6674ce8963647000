#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace hasa {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent streams from a master seed.
constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr uint64_t hash_string(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Generator seeded from a master seed and a list of stream identifiers
/// (e.g. {subject hash, copy index}); same inputs give the same sequence.
inline Rng make_rng(uint64_t seed, std::initializer_list<uint64_t> stream = {}) {
    uint64_t s = mix64(seed);
    for (uint64_t v : stream) s = mix64(s ^ mix64(v));
    return Rng(s);
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform_real(Rng& rng, double lo, double hi) {
    if (!(hi > lo)) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace hasa
