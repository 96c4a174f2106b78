#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "texloc/geometry.hpp"

namespace texloc {

// All randomness in the library goes through mt19937_64 plus the helpers
// below. std::*_distribution is implementation-defined, so draws are done
// by hand to keep seeded runs identical across platforms.
using Rng = std::mt19937_64;

// Derives an independent stream from a base seed and a stream id.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform integer in [0, n), n > 0. Rejection sampling, portable.
inline uint64_t uniform_below(Rng& rng, uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

// Uniform double in [0, 1).
inline double uniform_double(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_double(rng);
}

// Standard normal via Box-Muller (single value per call; the discarded
// pair keeps the draw sequence simple and order-stable).
inline double normal_draw(Rng& rng) {
    double u1;
    do {
        u1 = uniform_double(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform_double(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// Poisson draw by inversion; fine for the small means used here.
inline int poisson_draw(Rng& rng, double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 64.0) {
        // Normal approximation for large means.
        const double v = mean + std::sqrt(mean) * normal_draw(rng);
        return v < 0.0 ? 0 : static_cast<int>(v + 0.5);
    }
    const double limit = std::exp(-mean);
    double prod = uniform_double(rng);
    int count = 0;
    while (prod > limit) {
        prod *= uniform_double(rng);
        ++count;
    }
    return count;
}

// Partial Fisher-Yates: first k entries of a random k-subset of [0, n).
inline std::vector<uint32_t> sample_without_replacement(Rng& rng, uint32_t n, uint32_t k) {
    std::vector<uint32_t> idx(n);
    for (uint32_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (uint32_t i = 0; i < k; ++i) {
        const uint32_t j = i + static_cast<uint32_t>(uniform_below(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace texloc
