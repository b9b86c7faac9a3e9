#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dst/backbone.hpp"
#include "dst/rng.hpp"
#include "dst/tensor.hpp"

namespace dst::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool requires_grad = false) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) {
        x = rng.uniform(-scale, scale);
    }
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Exact bit patterns, so -0.0 and 0.0 differ.
inline ::testing::AssertionResult bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        return ::testing::AssertionFailure() << "shapes " << shape_str(a.shape()) << " vs " << shape_str(b.shape());
    }
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (std::bit_cast<std::uint64_t>(a.data()[i]) != std::bit_cast<std::uint64_t>(b.data()[i])) {
            return ::testing::AssertionFailure() << "element " << i << ": " << a.data()[i] << " vs " << b.data()[i];
        }
    }
    return ::testing::AssertionSuccess();
}

inline ::testing::AssertionResult near_all(const Tensor& a, std::vector<double> expected, double tol) {
    if (a.numel() != expected.size()) {
        return ::testing::AssertionFailure() << "size " << a.numel() << " vs " << expected.size();
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (!(std::abs(a.data()[i] - expected[i]) <= tol)) {
            return ::testing::AssertionFailure() << "element " << i << ": " << a.data()[i] << " vs " << expected[i];
        }
    }
    return ::testing::AssertionSuccess();
}

// Small master model for fast structural tests: D=16, H=4, L=6.
inline ModelConfig small_config(Variant variant = Variant::EncoderDecoder) {
    ModelConfig c;
    c.variant = variant;
    c.hidden = 16;
    c.heads = 4;
    c.layers = 6;
    return c;
}

// Perturbs every parameter away from its structured init (zero biases, unit
// LN) so slicing mistakes cannot hide behind symmetric values.
inline void jitter_params(SlimmableModel& model, std::uint64_t seed, double scale = 0.05) {
    Rng rng(seed);
    for (ParamEntry& e : model.params().entries()) {
        for (double& v : e.value.mutable_data()) {
            v += rng.uniform(-scale, scale);
        }
    }
}

}  // namespace dst::testing
