#pragma once

#include <cmath>
#include <cstdint>

namespace fewfont {

// Deterministic RNG used everywhere randomness is needed. splitmix64 core
// with hand-rolled uniform/normal/bounded draws, so sequences are identical
// across platforms and standard library versions.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed + 0x9e3779b97f4a7c15ull) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0,1)
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    // (0,1]
    double uniform_pos() { return double((next() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, one draw per call.
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % n;
    }

    // Derive an independent substream, e.g. fold(seed, iter, sample).
    static uint64_t fold(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        return z ^ (z >> 31);
    }
    static uint64_t fold(uint64_t a, uint64_t b, uint64_t c) { return fold(fold(a, b), c); }
};

}  // namespace fewfont
