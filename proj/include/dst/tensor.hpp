#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dst {

using Shape = std::vector<std::size_t>;

// Shape or width contract violated.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first gradient lands
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) {
            grad.assign(data.size(), 0.0);
        }
        return grad;
    }
};

}  // namespace detail

// Dense row-major 64-bit tensor taking part in a reverse-mode tape.
//
// Copies share the underlying node; ops never mutate their inputs. Leaf
// tensors created with requires_grad accumulate gradients across backward()
// calls until zero_grad().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor filled(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor identity(std::size_t n, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    // First extent of a 2-D tensor; a 1-D tensor is one row.
    std::size_t rows() const;
    // Last extent.
    std::size_t cols() const;

    std::span<const double> data() const { return node_->data; }
    // Raw write access; reserved for parameter initialization and optimizers.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    // Gradient buffer; zeros when nothing has been accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    // Seeds d(self)/d(self) = 1 and runs every registered backward rule in
    // reverse topological order. Requires a single-element tensor.
    void backward() const;

    // Same values, cut from the tape.
    Tensor detach() const;
    // Deep copy with fresh storage.
    Tensor clone(bool requires_grad = false) const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    // ---- op construction (used by ops.cpp) ----
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Gradient recording switch. When disabled ops never attach parents, so
// inference passes build no tape.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace dst
