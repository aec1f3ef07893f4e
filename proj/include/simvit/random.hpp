#pragma once

#include <cstdint>

namespace simvit {

// splitmix64. Used wherever a seed must reproduce bit-identical values
// across platforms and implementations; <random> distributions are not
// portable in that sense.
class SplitMix64 {
   public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound), bound > 0.
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

    // Standard normal via Box-Muller (one value per call).
    double normal();

    // Normal(0, stddev) redrawn until it falls within +-2 stddev.
    double truncated_normal(double stddev);

   private:
    std::uint64_t state_;
};

}  // namespace simvit
