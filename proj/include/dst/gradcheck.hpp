#pragma once

#include <functional>

#include "dst/tensor.hpp"

namespace dst {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares the tape gradient of a scalar f at x against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate. The relative
// error denominator is max(|analytic|, |numeric|, 1e-8).
//
// `x` must be a leaf with requires_grad; its values are perturbed in place and
// restored before returning. f is re-evaluated from scratch each call, so any
// other leaves f closes over keep their values.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, Tensor& x, double h = 1e-4);

}  // namespace dst
