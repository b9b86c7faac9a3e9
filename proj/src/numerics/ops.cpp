#include "dst/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dst/flops.hpp"

namespace dst {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_finite(const std::vector<double>& values, const char* op) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite result");
        }
    }
}

// Wraps freshly computed values in a node, wiring the backward rule only when
// recording is on and some input wants gradients.
Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward) {
    check_finite(values, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    if (grad_enabled()) {
        const bool needs = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
        if (needs) {
            node->requires_grad = true;
            node->parents = std::move(parents);
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

void require_2d(const Tensor& t, const char* op) {
    if (t.dim() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
    }
}

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
    v8d v;
    __builtin_memcpy(&v, p, sizeof v);
    return v;
}

inline void store8(double* p, v8d v) { __builtin_memcpy(p, &v, sizeof v); }

// c[m x n] += A * b[k x n] with A(i, t) = a[i * rs + t * cs]. Every c[i][j]
// accumulates over t in ascending order with separate multiply and add; the
// tiling only keeps a block of c in registers and never reorders a sum.
void gemm_acc(const double* a, std::size_t rs, std::size_t cs, const double* b, double* c, std::size_t m,
              std::size_t k, std::size_t n) {
    constexpr std::size_t RB = 4;
    constexpr std::size_t CB = 16;
    std::size_t i0 = 0;
    for (; i0 + RB <= m; i0 += RB) {
        std::size_t j0 = 0;
        for (; j0 + CB <= n; j0 += CB) {
            double* c0 = c + i0 * n + j0;
            v8d acc00 = load8(c0), acc01 = load8(c0 + 8);
            v8d acc10 = load8(c0 + n), acc11 = load8(c0 + n + 8);
            v8d acc20 = load8(c0 + 2 * n), acc21 = load8(c0 + 2 * n + 8);
            v8d acc30 = load8(c0 + 3 * n), acc31 = load8(c0 + 3 * n + 8);
            const double* a0 = a + i0 * rs;
            for (std::size_t t = 0; t < k; ++t) {
                const v8d b0 = load8(b + t * n + j0);
                const v8d b1 = load8(b + t * n + j0 + 8);
                const double* at = a0 + t * cs;
                const double s0 = at[0], s1 = at[rs], s2 = at[2 * rs], s3 = at[3 * rs];
                acc00 += s0 * b0;
                acc01 += s0 * b1;
                acc10 += s1 * b0;
                acc11 += s1 * b1;
                acc20 += s2 * b0;
                acc21 += s2 * b1;
                acc30 += s3 * b0;
                acc31 += s3 * b1;
            }
            store8(c0, acc00);
            store8(c0 + 8, acc01);
            store8(c0 + n, acc10);
            store8(c0 + n + 8, acc11);
            store8(c0 + 2 * n, acc20);
            store8(c0 + 2 * n + 8, acc21);
            store8(c0 + 3 * n, acc30);
            store8(c0 + 3 * n + 8, acc31);
        }
        if (j0 < n) {
            for (std::size_t r = 0; r < RB; ++r) {
                double* crow = c + (i0 + r) * n;
                for (std::size_t t = 0; t < k; ++t) {
                    const double s = a[(i0 + r) * rs + t * cs];
                    const double* brow = b + t * n;
                    for (std::size_t j = j0; j < n; ++j) {
                        crow[j] += s * brow[j];
                    }
                }
            }
        }
    }
    for (; i0 < m; ++i0) {
        double* crow = c + i0 * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double s = a[i0 * rs + t * cs];
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += s * brow[j];
            }
        }
    }
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    gemm_acc(a, k, 1, b, c, m, k, n);
}

// out[k x n] += a[m x k]^T * d[m x n], summing over the m rows in order.
void gemm_tn_acc(const double* a, const double* d, double* out, std::size_t m, std::size_t k, std::size_t n) {
    gemm_acc(a, 1, k, d, out, k, m, n);
}

std::vector<double> transpose(std::span<const double> x, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            t[c * rows + r] = x[r * cols + c];
        }
    }
    return t;
}

void accumulate(std::vector<double>& dst, std::span<const double> src) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] += src[i];
    }
}

}  // namespace

// ==================== Linear algebra ====================

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> c(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), c.data(), m, k, n);
    record_flops(2ull * m * k * n);
    return make_result("matmul", {m, n}, std::move(c), {a.node(), b.node()}, [m, k, n](Node& self) {
        const NodePtr& pa = self.parents[0];
        const NodePtr& pb = self.parents[1];
        if (pa->requires_grad) {
            // dA += dC * B^T
            const std::vector<double> bt = transpose(pb->data, k, n);
            std::vector<double>& ga = pa->grad_buffer();
            gemm_nn(self.grad.data(), bt.data(), ga.data(), m, n, k);
        }
        if (pb->requires_grad) {
            // dB += A^T * dC
            gemm_tn_acc(pa->data.data(), self.grad.data(), pb->grad_buffer().data(), m, k, n);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    if (b.shape()[1] != k) {
        throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    }
    const std::vector<double> bt = transpose(b.data(), n, k);
    std::vector<double> c(m * n, 0.0);
    gemm_nn(a.data().data(), bt.data(), c.data(), m, k, n);
    record_flops(2ull * m * k * n);
    return make_result("matmul_nt", {m, n}, std::move(c), {a.node(), b.node()}, [m, k, n](Node& self) {
        const NodePtr& pa = self.parents[0];
        const NodePtr& pb = self.parents[1];
        if (pa->requires_grad) {
            // dA += dC * B
            gemm_nn(self.grad.data(), pb->data.data(), pa->grad_buffer().data(), m, n, k);
        }
        if (pb->requires_grad) {
            // dB += dC^T * A
            gemm_tn_acc(self.grad.data(), pa->data.data(), pb->grad_buffer().data(), m, n, k);
        }
    });
}

// ==================== Elementwise ====================

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] + y[i];
    }
    record_flops(out.size());
    return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (const NodePtr& p : self.parents) {
            if (p->requires_grad) {
                accumulate(p->grad_buffer(), self.grad);
            }
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.dim() != 1 || bias.numel() != x.cols()) {
        throw DimensionError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
    }
    const std::size_t n = x.cols(), m = x.numel() / n;
    std::vector<double> out(x.data().begin(), x.data().end());
    const auto b = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += b[j];
        }
    }
    record_flops(out.size());
    return make_result("add_bias", x.shape(), std::move(out), {x.node(), bias.node()}, [m, n](Node& self) {
        if (self.parents[0]->requires_grad) {
            accumulate(self.parents[0]->grad_buffer(), self.grad);
        }
        if (self.parents[1]->requires_grad) {
            std::vector<double>& gb = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gb[j] += self.grad[i * n + j];
                }
            }
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.numel());
    const auto v = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = v[i] * factor;
    }
    record_flops(out.size());
    return make_result("scale", x.shape(), std::move(out), {x.node()}, [factor](Node& self) {
        std::vector<double>& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * factor;
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    const auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * y[i];
    }
    record_flops(out.size());
    return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
        const NodePtr& pa = self.parents[0];
        const NodePtr& pb = self.parents[1];
        if (pa->requires_grad) {
            std::vector<double>& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pb->data[i];
            }
        }
        if (pb->requires_grad) {
            std::vector<double>& g = pb->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * pa->data[i];
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto v = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = v[i] > 0.0 ? v[i] : 0.0;
    }
    record_flops(out.size());
    return make_result("relu", x.shape(), std::move(out), {x.node()}, [](Node& self) {
        const NodePtr& p = self.parents[0];
        std::vector<double>& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (p->data[i] > 0.0) {
                g[i] += self.grad[i];
            }
        }
    });
}

// ==================== Normalization ====================

Tensor softmax_rows(const Tensor& x) {
    const std::size_t n = x.cols(), m = x.numel() / n;
    std::vector<double> out(x.numel());
    const auto v = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = v.data() + i * n;
        double* o = out.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(row[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= total;
        }
    }
    record_flops(5ull * out.size());
    return make_result("softmax_rows", x.shape(), std::move(out), {x.node()}, [m, n](Node& self) {
        std::vector<double>& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += dy[j] * y[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += y[j] * (dy[j] - dot);
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t n = x.cols();
    if (gamma.numel() != n || beta.numel() != n) {
        throw DimensionError("layer_norm: width " + std::to_string(n) + " vs gamma " + shape_str(gamma.shape()) +
                             ", beta " + shape_str(beta.shape()));
    }
    if (!(eps > 0.0)) {
        throw DimensionError("layer_norm: eps must be positive");
    }
    const std::size_t m = x.numel() / n;
    std::vector<double> out(x.numel());
    std::vector<double> xhat(x.numel());
    std::vector<double> inv_std(m);
    const auto v = x.data(), gm = gamma.data(), bt = beta.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = v.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean += row[j];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (row[j] - mean) * inv;
            xhat[i * n + j] = h;
            out[i * n + j] = gm[j] * h + bt[j];
        }
    }
    record_flops(5ull * out.size());
    return make_result(
        "layer_norm", x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            const NodePtr& px = self.parents[0];
            const NodePtr& pg = self.parents[1];
            const NodePtr& pb = self.parents[2];
            if (pg->requires_grad || pb->requires_grad) {
                std::vector<double>& gg = pg->grad_buffer();
                std::vector<double>& gb = pb->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gg[j] += self.grad[i * n + j] * xhat[i * n + j];
                        gb[j] += self.grad[i * n + j];
                    }
                }
            }
            if (px->requires_grad) {
                std::vector<double>& gx = px->grad_buffer();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad[i * n + j] * pg->data[j];
                        mean_d += d;
                        mean_dx += d * xhat[i * n + j];
                    }
                    mean_d *= inv_n;
                    mean_dx *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad[i * n + j] * pg->data[j];
                        gx[i * n + j] += inv_std[i] * (d - mean_d - xhat[i * n + j] * mean_dx);
                    }
                }
            }
        });
}

// ==================== Indexing ====================

namespace {
thread_local const SliceObserver* g_slice_observer = nullptr;
}  // namespace

SliceObserverScope::SliceObserverScope(SliceObserver observer)
    : observer_(std::move(observer)), previous_(g_slice_observer) {
    g_slice_observer = &observer_;
}

SliceObserverScope::~SliceObserverScope() { g_slice_observer = previous_; }

Tensor slice_leading(const Tensor& w, std::size_t rows, std::size_t cols) {
    if (g_slice_observer != nullptr) {
        (*g_slice_observer)(w, rows, w.dim() == 1 ? 0 : cols);
    }
    if (w.dim() == 1) {
        if (rows == 0 || rows > w.numel()) {
            throw DimensionError("slice_leading: " + std::to_string(rows) + " of " + shape_str(w.shape()));
        }
        if (rows == w.numel()) {
            return w;
        }
        std::vector<double> out(w.data().begin(), w.data().begin() + static_cast<std::ptrdiff_t>(rows));
        return make_result("slice_leading", {rows}, std::move(out), {w.node()}, [rows](Node& self) {
            std::vector<double>& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < rows; ++i) {
                g[i] += self.grad[i];
            }
        });
    }
    require_2d(w, "slice_leading");
    const std::size_t src_cols = w.shape()[1];
    if (rows == 0 || cols == 0 || rows > w.shape()[0] || cols > src_cols) {
        throw DimensionError("slice_leading: [" + std::to_string(rows) + "x" + std::to_string(cols) + "] of " +
                             shape_str(w.shape()));
    }
    if (rows == w.shape()[0] && cols == src_cols) {
        return w;
    }
    std::vector<double> out(rows * cols);
    const auto v = w.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * src_cols), cols, out.begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
    return make_result("slice_leading", {rows, cols}, std::move(out), {w.node()}, [rows, cols, src_cols](Node& self) {
        std::vector<double>& g = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                g[r * src_cols + c] += self.grad[r * cols + c];
            }
        }
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
    require_2d(table, "embedding");
    const std::size_t vocab = table.shape()[0], width = table.shape()[1];
    if (ids.empty()) {
        throw DimensionError("embedding: no ids");
    }
    std::vector<int> idx(ids.begin(), ids.end());
    std::vector<double> out(idx.size() * width);
    const auto v = table.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
            throw DimensionError("embedding: id " + std::to_string(idx[i]) + " outside vocabulary of " +
                                 std::to_string(vocab));
        }
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idx[i]) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    const std::size_t count = idx.size();
    return make_result("embedding", {count, width}, std::move(out), {table.node()},
                       [idx = std::move(idx), width](Node& self) {
                           std::vector<double>& g = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                               double* row = g.data() + static_cast<std::size_t>(idx[i]) * width;
                               for (std::size_t j = 0; j < width; ++j) {
                                   row[j] += self.grad[i * width + j];
                               }
                           }
                       });
}

Tensor concat_segments(const std::vector<Tensor>& parts, const std::vector<std::size_t>& rows_per_segment,
                       std::size_t segments) {
    if (parts.empty() || parts.size() != rows_per_segment.size()) {
        throw DimensionError("concat_segments: parts and row counts differ");
    }
    const std::size_t width = parts.front().cols();
    std::size_t seg_rows = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        require_2d(parts[p], "concat_segments");
        if (parts[p].cols() != width || parts[p].rows() != rows_per_segment[p] * segments) {
            throw DimensionError("concat_segments: part " + std::to_string(p) + " has shape " +
                                 shape_str(parts[p].shape()));
        }
        seg_rows += rows_per_segment[p];
    }
    std::vector<double> out(segments * seg_rows * width);
    std::vector<NodePtr> parents;
    for (std::size_t s = 0; s < segments; ++s) {
        std::size_t row = s * seg_rows;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const auto v = parts[p].data();
            const std::size_t n = rows_per_segment[p] * width;
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(s * n), n,
                        out.begin() + static_cast<std::ptrdiff_t>(row * width));
            row += rows_per_segment[p];
        }
    }
    for (const Tensor& p : parts) {
        parents.push_back(p.node());
    }
    return make_result("concat_segments", {segments * seg_rows, width}, std::move(out), std::move(parents),
                       [rows_per_segment, segments, seg_rows, width](Node& self) {
                           for (std::size_t s = 0; s < segments; ++s) {
                               std::size_t row = s * seg_rows;
                               for (std::size_t p = 0; p < self.parents.size(); ++p) {
                                   const std::size_t n = rows_per_segment[p] * width;
                                   if (self.parents[p]->requires_grad) {
                                       std::vector<double>& g = self.parents[p]->grad_buffer();
                                       for (std::size_t i = 0; i < n; ++i) {
                                           g[s * n + i] += self.grad[row * width + i];
                                       }
                                   }
                                   row += rows_per_segment[p];
                               }
                           }
                       });
}

Tensor take_segment_row(const Tensor& x, std::size_t segment_rows, std::size_t index) {
    require_2d(x, "take_segment_row");
    if (segment_rows == 0 || index >= segment_rows || x.rows() % segment_rows != 0) {
        throw DimensionError("take_segment_row: bad segmentation of " + shape_str(x.shape()));
    }
    const std::size_t segments = x.rows() / segment_rows, width = x.cols();
    std::vector<double> out(segments * width);
    const auto v = x.data();
    for (std::size_t s = 0; s < segments; ++s) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((s * segment_rows + index) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(s * width));
    }
    return make_result("take_segment_row", {segments, width}, std::move(out), {x.node()},
                       [segments, segment_rows, index, width](Node& self) {
                           std::vector<double>& g = self.parents[0]->grad_buffer();
                           for (std::size_t s = 0; s < segments; ++s) {
                               for (std::size_t j = 0; j < width; ++j) {
                                   g[(s * segment_rows + index) * width + j] += self.grad[s * width + j];
                               }
                           }
                       });
}

// ==================== Attention ====================

Tensor segmented_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           std::size_t head_dim, const SegmentLayout& layout, const AttentionSink* sink) {
    require_2d(q, "attention");
    require_2d(k, "attention");
    require_2d(v, "attention");
    const std::size_t width = heads * head_dim;
    const std::size_t segs = layout.segments, mq = layout.query_rows, nk = layout.key_rows;
    if (heads == 0 || head_dim == 0 || q.cols() != width || k.cols() != width || v.cols() != width) {
        throw DimensionError("attention: head layout " + std::to_string(heads) + "x" + std::to_string(head_dim) +
                             " vs Q " + shape_str(q.shape()) + ", K " + shape_str(k.shape()) + ", V " +
                             shape_str(v.shape()));
    }
    if (mq == 0 || nk == 0 || q.rows() != segs * mq || k.rows() != segs * nk || v.rows() != segs * nk) {
        throw DimensionError("attention: segment layout does not match Q " + shape_str(q.shape()) + ", K " +
                             shape_str(k.shape()));
    }
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const auto qd = q.data(), kd = k.data(), vd = v.data();
    std::vector<double> out(segs * mq * width, 0.0);
    // probs[(s * heads + h) * mq * nk + i * nk + j]
    std::vector<double> probs(segs * heads * mq * nk);
    for (std::size_t s = 0; s < segs; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
            double* p = probs.data() + (s * heads + h) * mq * nk;
            const std::size_t col0 = h * head_dim;
            for (std::size_t i = 0; i < mq; ++i) {
                const double* qi = qd.data() + (s * mq + i) * width + col0;
                double* prow = p + i * nk;
                for (std::size_t j = 0; j < nk; ++j) {
                    const double* kj = kd.data() + (s * nk + j) * width + col0;
                    double dot = 0.0;
                    for (std::size_t t = 0; t < head_dim; ++t) {
                        dot += qi[t] * kj[t];
                    }
                    prow[j] = dot * inv_sqrt;
                }
                const double mx = *std::max_element(prow, prow + nk);
                double total = 0.0;
                for (std::size_t j = 0; j < nk; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    total += prow[j];
                }
                for (std::size_t j = 0; j < nk; ++j) {
                    prow[j] /= total;
                }
                double* orow = out.data() + (s * mq + i) * width + col0;
                for (std::size_t j = 0; j < nk; ++j) {
                    const double a = prow[j];
                    const double* vj = vd.data() + (s * nk + j) * width + col0;
                    for (std::size_t t = 0; t < head_dim; ++t) {
                        orow[t] += a * vj[t];
                    }
                }
            }
            if (sink != nullptr && *sink) {
                (*sink)(s, h, mq, nk, std::span<const double>(p, mq * nk));
            }
        }
    }
    record_flops(segs * heads * (4ull * mq * nk * head_dim + 6ull * mq * nk));
    return make_result(
        "attention", {segs * mq, width}, std::move(out), {q.node(), k.node(), v.node()},
        [segs, heads, head_dim, mq, nk, width, inv_sqrt, probs = std::move(probs)](Node& self) {
            const NodePtr& pq = self.parents[0];
            const NodePtr& pk = self.parents[1];
            const NodePtr& pv = self.parents[2];
            std::vector<double>* gq = pq->requires_grad ? &pq->grad_buffer() : nullptr;
            std::vector<double>* gk = pk->requires_grad ? &pk->grad_buffer() : nullptr;
            std::vector<double>* gv = pv->requires_grad ? &pv->grad_buffer() : nullptr;
            std::vector<double> dscore(nk);
            for (std::size_t s = 0; s < segs; ++s) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const double* p = probs.data() + (s * heads + h) * mq * nk;
                    const std::size_t col0 = h * head_dim;
                    for (std::size_t i = 0; i < mq; ++i) {
                        const double* dout = self.grad.data() + (s * mq + i) * width + col0;
                        const double* prow = p + i * nk;
                        // dP = dO V^T; dV += P^T dO
                        double dot = 0.0;
                        for (std::size_t j = 0; j < nk; ++j) {
                            const double* vj = pv->data.data() + (s * nk + j) * width + col0;
                            double dp = 0.0;
                            for (std::size_t t = 0; t < head_dim; ++t) {
                                dp += dout[t] * vj[t];
                            }
                            dscore[j] = dp;
                            dot += dp * prow[j];
                            if (gv != nullptr) {
                                double* gvj = gv->data() + (s * nk + j) * width + col0;
                                for (std::size_t t = 0; t < head_dim; ++t) {
                                    gvj[t] += prow[j] * dout[t];
                                }
                            }
                        }
                        // dS = P (dP - <dP, P>), scaled back through 1/sqrt(head_dim)
                        for (std::size_t j = 0; j < nk; ++j) {
                            dscore[j] = prow[j] * (dscore[j] - dot) * inv_sqrt;
                        }
                        const double* qi = pq->data.data() + (s * mq + i) * width + col0;
                        for (std::size_t j = 0; j < nk; ++j) {
                            const double ds = dscore[j];
                            if (gq != nullptr) {
                                const double* kj = pk->data.data() + (s * nk + j) * width + col0;
                                double* gqi = gq->data() + (s * mq + i) * width + col0;
                                for (std::size_t t = 0; t < head_dim; ++t) {
                                    gqi[t] += ds * kj[t];
                                }
                            }
                            if (gk != nullptr) {
                                double* gkj = gk->data() + (s * nk + j) * width + col0;
                                for (std::size_t t = 0; t < head_dim; ++t) {
                                    gkj[t] += ds * qi[t];
                                }
                            }
                        }
                    }
                }
            }
        });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require_2d(q, "attention");
    require_2d(k, "attention");
    if (q.cols() != k.cols() || k.cols() != v.cols()) {
        throw DimensionError("attention: feature widths differ");
    }
    return segmented_attention(q, k, v, 1, q.cols(), SegmentLayout{1, q.rows(), k.rows()});
}

Tensor attention_pool(const Tensor& x, const Tensor& scores, std::size_t segment_rows) {
    require_2d(x, "attention_pool");
    if (segment_rows == 0 || x.rows() % segment_rows != 0 || scores.numel() != x.rows()) {
        throw DimensionError("attention_pool: x " + shape_str(x.shape()) + ", scores " + shape_str(scores.shape()) +
                             ", segment rows " + std::to_string(segment_rows));
    }
    const std::size_t segs = x.rows() / segment_rows, width = x.cols();
    const auto xd = x.data(), sd = scores.data();
    std::vector<double> alpha(x.rows());
    std::vector<double> out(segs * width, 0.0);
    for (std::size_t s = 0; s < segs; ++s) {
        const double* srow = sd.data() + s * segment_rows;
        double* a = alpha.data() + s * segment_rows;
        const double mx = *std::max_element(srow, srow + segment_rows);
        double total = 0.0;
        for (std::size_t i = 0; i < segment_rows; ++i) {
            a[i] = std::exp(srow[i] - mx);
            total += a[i];
        }
        for (std::size_t i = 0; i < segment_rows; ++i) {
            a[i] /= total;
        }
        double* o = out.data() + s * width;
        for (std::size_t i = 0; i < segment_rows; ++i) {
            const double* xi = xd.data() + (s * segment_rows + i) * width;
            for (std::size_t j = 0; j < width; ++j) {
                o[j] += a[i] * xi[j];
            }
        }
    }
    record_flops(segs * (5ull * segment_rows + 2ull * segment_rows * width));
    return make_result("attention_pool", {segs, width}, std::move(out), {x.node(), scores.node()},
                       [segs, segment_rows, width, alpha = std::move(alpha)](Node& self) {
                           const NodePtr& px = self.parents[0];
                           const NodePtr& ps = self.parents[1];
                           std::vector<double> dalpha(segment_rows);
                           for (std::size_t s = 0; s < segs; ++s) {
                               const double* dout = self.grad.data() + s * width;
                               const double* a = alpha.data() + s * segment_rows;
                               double dot = 0.0;
                               for (std::size_t i = 0; i < segment_rows; ++i) {
                                   const std::size_t row = s * segment_rows + i;
                                   const double* xi = px->data.data() + row * width;
                                   double da = 0.0;
                                   for (std::size_t j = 0; j < width; ++j) {
                                       da += dout[j] * xi[j];
                                   }
                                   dalpha[i] = da;
                                   dot += da * a[i];
                                   if (px->requires_grad) {
                                       double* gx = px->grad_buffer().data() + row * width;
                                       for (std::size_t j = 0; j < width; ++j) {
                                           gx[j] += a[i] * dout[j];
                                       }
                                   }
                               }
                               if (ps->requires_grad) {
                                   std::vector<double>& gs = ps->grad_buffer();
                                   for (std::size_t i = 0; i < segment_rows; ++i) {
                                       gs[s * segment_rows + i] += a[i] * (dalpha[i] - dot);
                                   }
                               }
                           }
                       });
}

// ==================== Reductions & losses ====================

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) {
        total += v;
    }
    return make_result("sum", {1}, {total}, {x.node()}, [](Node& self) {
        std::vector<double>& g = self.parents[0]->grad_buffer();
        for (double& gi : g) {
            gi += self.grad[0];
        }
    });
}

Tensor sum_squares(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) {
        total += v * v;
    }
    return make_result("sum_squares", {1}, {total}, {x.node()}, [](Node& self) {
        const NodePtr& p = self.parents[0];
        std::vector<double>& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += 2.0 * p->data[i] * self.grad[0];
        }
    });
}

namespace {

std::vector<double> softmax_copy(std::span<const double> row) {
    std::vector<double> p(row.begin(), row.end());
    const double mx = *std::max_element(p.begin(), p.end());
    double total = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        total += v;
    }
    for (double& v : p) {
        v /= total;
    }
    return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_2d(logits, "cross_entropy");
    const std::size_t m = logits.rows(), n = logits.cols();
    if (labels.size() != m) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(m) +
                             " rows");
    }
    std::vector<double> probs(m * n);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n) {
            throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) + " out of range");
        }
        const std::vector<double> p = softmax_copy(logits.data().subspan(i * n, n));
        std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * n));
        loss -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], kLogClamp));
    }
    loss /= static_cast<double>(m);
    std::vector<int> lab(labels.begin(), labels.end());
    return make_result("cross_entropy", {1}, {loss}, {logits.node()},
                       [m, n, probs = std::move(probs), lab = std::move(lab)](Node& self) {
                           std::vector<double>& g = self.parents[0]->grad_buffer();
                           const double w = self.grad[0] / static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                   const double target = static_cast<std::size_t>(lab[i]) == j ? 1.0 : 0.0;
                                   g[i * n + j] += w * (probs[i * n + j] - target);
                               }
                           }
                       });
}

Tensor kl_softmax(const Tensor& teacher_logits, const Tensor& student_logits) {
    if (teacher_logits.shape() != student_logits.shape()) {
        throw DimensionError("kl_softmax: " + shape_str(teacher_logits.shape()) + " vs " +
                             shape_str(student_logits.shape()));
    }
    const std::size_t n = student_logits.cols(), m = student_logits.numel() / n;
    std::vector<double> pt(m * n), ps(m * n);
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::vector<double> t = softmax_copy(teacher_logits.data().subspan(i * n, n));
        const std::vector<double> s = softmax_copy(student_logits.data().subspan(i * n, n));
        for (std::size_t j = 0; j < n; ++j) {
            pt[i * n + j] = t[j];
            ps[i * n + j] = s[j];
            if (t[j] > 0.0) {
                loss += t[j] * (std::log(std::max(t[j], kLogClamp)) - std::log(std::max(s[j], kLogClamp)));
            }
        }
    }
    loss /= static_cast<double>(m);
    return make_result("kl_softmax", {1}, {loss}, {student_logits.node()},
                       [m, n, pt = std::move(pt), ps = std::move(ps)](Node& self) {
                           std::vector<double>& g = self.parents[0]->grad_buffer();
                           const double w = self.grad[0] / static_cast<double>(m);
                           for (std::size_t i = 0; i < m * n; ++i) {
                               g[i] += w * (ps[i] - pt[i]);
                           }
                       });
}

Tensor bce_sigmoid(const Tensor& teacher_logits, const Tensor& student_logits) {
    if (teacher_logits.shape() != student_logits.shape()) {
        throw DimensionError("bce_sigmoid: " + shape_str(teacher_logits.shape()) + " vs " +
                             shape_str(student_logits.shape()));
    }
    const std::size_t count = student_logits.numel();
    std::vector<double> targets(count), preds(count);
    double loss = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double t = sigmoid(teacher_logits.data()[i]);
        const double p = sigmoid(student_logits.data()[i]);
        targets[i] = t;
        preds[i] = p;
        loss -= t * std::log(std::max(p, kLogClamp)) + (1.0 - t) * std::log(std::max(1.0 - p, kLogClamp));
    }
    loss /= static_cast<double>(count);
    return make_result("bce_sigmoid", {1}, {loss}, {student_logits.node()},
                       [count, targets = std::move(targets), preds = std::move(preds)](Node& self) {
                           std::vector<double>& g = self.parents[0]->grad_buffer();
                           const double w = self.grad[0] / static_cast<double>(count);
                           for (std::size_t i = 0; i < count; ++i) {
                               g[i] += w * (preds[i] - targets[i]);
                           }
                       });
}

}  // namespace dst
