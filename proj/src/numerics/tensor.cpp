#include "dst/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dst {

namespace {

thread_local bool g_grad_enabled = true;

#if defined(__GLIBC__)
// Activation and gradient buffers are freed and reallocated at the same sizes
// every step. Keeping them on the heap instead of fresh mmap pages avoids
// re-faulting zeroed memory on each allocation.
const bool g_allocator_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
}();
#endif

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                             " values");
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError("tensor: non-finite initial value");
        }
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) {
        if (s == 0) {
            throw DimensionError("tensor: zero extent in shape");
        }
        n *= s;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
    std::vector<double> values(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        values[i * n + i] = 1.0;
    }
    return from({n, n}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const {
    const Shape& s = node_->shape;
    if (s.size() == 1) {
        return 1;
    }
    if (s.size() != 2) {
        throw DimensionError("tensor: rows() needs a 1-D or 2-D tensor, got " + shape_str(s));
    }
    return s[0];
}

std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("tensor: item() on " + shape_str(shape()));
    }
    return node_->data[0];
}

std::span<const double> Tensor::grad() const {
    return node_->grad_buffer();
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw DimensionError("tensor: backward() needs a scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        return;
    }

    // Iterative post-order DFS; parents always precede children in `order`.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward && !node->grad.empty()) {
            node->backward(*node);
        }
    }
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = node_->shape;
    node->data = node_->data;
    return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
    Tensor copy = detach();
    copy.node_->requires_grad = requires_grad;
    return copy;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace dst
