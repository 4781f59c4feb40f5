#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "framecast/error.hpp"

namespace framecast {

// Deterministic random source. mt19937_64 supplies bits; the uniform/normal
// transforms are written out explicitly (Box-Muller, rejection sampling)
// because std::*_distribution output differs between standard libraries and
// the pipelines here must be bitwise reproducible from a seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range, rejection-sampled so the result is unbiased.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw UsageError("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(engine_());  // full 64-bit range
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return lo + static_cast<int64_t>(v % span);
    }

    // Standard normal via Box-Muller; the paired value is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Derives an independent deterministic stream (e.g. one per clip or window).
    // Depends only on the constructor seed and the stream id, not on how many
    // draws have been consumed.
    Rng fork(uint64_t stream) const { return Rng(mix(seed_, stream)); }

    // splitmix64-style avalanche combine; used for seed derivation everywhere.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    uint64_t seed_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace framecast
