#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace redist {

using Rng = std::mt19937_64;

/// Deterministic generator for the substream addressed by `path` under `root`.
/// Streams for distinct paths are decorrelated through std::seed_seq.
inline Rng substream(std::uint64_t root, std::initializer_list<std::uint64_t> path = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(root);
    for (auto v : path) push(v);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// 64-bit FNV-1a; stable across platforms, used for content ids.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
    auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace redist
