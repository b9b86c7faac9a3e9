#include "dst/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dst {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, Tensor& x, double h) {
    if (!(h > 0.0)) {
        throw std::invalid_argument("finite_diff_check: step must be positive");
    }
    if (!x.requires_grad()) {
        throw std::invalid_argument("finite_diff_check: x must require gradients");
    }

    x.zero_grad();
    const Tensor y = f();
    if (!std::isfinite(y.item())) {
        throw NumericError("finite_diff_check: non-finite f(x)");
    }
    y.backward();
    const std::vector<double> analytic(x.grad().begin(), x.grad().end());
    x.zero_grad();

    GradCheckResult result;
    std::span<double> values = x.mutable_data();
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double original = values[i];
        values[i] = original + h;
        const double plus = f().item();
        values[i] = original - h;
        const double minus = f().item();
        values[i] = original;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw NumericError("finite_diff_check: non-finite f at perturbed point");
        }
        const double numeric = (plus - minus) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || err > result.max_rel_error) {
            result = {err, i, analytic[i], numeric};
        }
    }
    return result;
}

}  // namespace dst
