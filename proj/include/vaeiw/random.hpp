#pragma once

#include <cstdint>
#include <random>

namespace vaeiw {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of run `index` under `master`. Runs can be executed in any order or in
/// parallel and still see the same stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

/// Uniform integer in [0, n) by rejection; unlike std::uniform_int_distribution
/// the result is identical across standard library implementations.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

}  // namespace vaeiw
