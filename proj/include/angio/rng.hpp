#pragma once

#include <cmath>
#include <cstdint>

#include "angio/errors.hpp"

namespace angio {

// SplitMix64: tiny-state generator with cross-platform bit-identical output.
// Every stochastic component in the library draws from this, so a run is
// fully determined by its master seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n) by masked rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw param_error("rng.below: n must be positive");
        if (n == 1) return 0;
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t r = next() & mask;
            if (r < n) return r;
        }
    }

    // Standard normal via Box-Muller; the cosine branch is returned first and
    // the sine branch cached, so the draw sequence is pinned.
    double gauss() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double gauss(double mean, double sigma) { return mean + sigma * gauss(); }

  private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// Child-seed derivation for per-(epoch, image) streams: three chained
// SplitMix64 steps keyed by the master seed and both indices. Distinct (a, b)
// pairs land in well-separated streams, so parallel plan sampling is
// bit-reproducible regardless of worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    Rng r1(master);
    std::uint64_t x = r1.next() ^ (a * 0x9E3779B97F4A7C15ULL);
    Rng r2(x);
    std::uint64_t y = r2.next() ^ (b * 0xBF58476D1CE4E5B9ULL);
    Rng r3(y);
    return r3.next();
}

}  // namespace angio
