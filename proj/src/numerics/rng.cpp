#include "dst/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dst {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below: empty range");
    }
    // Largest multiple of n representable; draws at or above it are rejected.
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    while (true) {
        const std::uint64_t x = engine_();
        if (x < limit) {
            return x % n;
        }
    }
}

double Rng::normal(double mean, double stddev) {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace dst
