#include "simvit/random.hpp"

#include <cmath>
#include <numbers>

namespace simvit {

double SplitMix64::normal() {
    // 1 - u keeps the logarithm finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double SplitMix64::truncated_normal(double stddev) {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= 2.0) return z * stddev;
    }
}

}  // namespace simvit
