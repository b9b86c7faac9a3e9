#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace dst {

// Deterministic random source.
//
// Engine: std::mt19937_64, whose output sequence the C++ standard fixes for a
// given seed. The distribution transforms below are spelled out here instead
// of using <random> distributions, whose algorithms are implementation-defined:
//   uniform()      53 high bits of one draw, scaled to [0, 1)
//   below(n)       rejection sampling on one draw per attempt (unbiased)
//   normal()       Box-Muller on two uniform() draws, no cached spare
// Every call site consumes draws in program order; nothing is buffered.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t n);
    double normal(double mean = 0.0, double stddev = 1.0);

    // Fisher-Yates, walking from the back.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer; derives independent stream seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace dst
