#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dst/tensor.hpp"

namespace dst {

// Row blocks of a batched activation matrix: `segments` samples stacked
// vertically, each owning a fixed number of rows.
struct SegmentLayout {
    std::size_t segments = 1;
    std::size_t query_rows = 0;
    std::size_t key_rows = 0;
};

// Receives every row-stochastic attention matrix computed by
// segmented_attention: (segment, head, rows, cols, probabilities).
using AttentionSink =
    std::function<void(std::size_t, std::size_t, std::size_t, std::size_t, std::span<const double>)>;

// ==================== Linear algebra ====================

// c[i][j] = sum_t a[i][t] * b[t][j], t ascending.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T with b stored [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// ==================== Elementwise ====================

Tensor add(const Tensor& a, const Tensor& b);
// x[m x n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor mul(const Tensor& a, const Tensor& b);
// Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

// ==================== Normalization ====================

// exp(x - max) / sum, per row of the last dimension.
Tensor softmax_rows(const Tensor& x);
// gamma * (x - mean) / sqrt(var + eps) + beta over the last dimension.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// ==================== Indexing ====================

// Leading [rows x cols] block of a 2-D tensor (or leading `rows` entries of a
// 1-D tensor, cols ignored). Gradients land in the matching block of the
// source. Returns the source itself when the block is the whole tensor.
Tensor slice_leading(const Tensor& w, std::size_t rows, std::size_t cols = 0);
Tensor embedding(const Tensor& table, std::span<const int> ids);
// Per segment, stacks the rows of each part in order. Part i contributes
// rows_per_segment[i] rows to every segment.
Tensor concat_segments(const std::vector<Tensor>& parts, const std::vector<std::size_t>& rows_per_segment,
                       std::size_t segments);
// Row `index` of every segment of `segment_rows` rows.
Tensor take_segment_row(const Tensor& x, std::size_t segment_rows, std::size_t index);

// Sees every slice_leading call, identity slices included: (source, rows,
// cols), cols being 0 for 1-D sources. Used to audit which parameter entries
// a forward pass reads.
using SliceObserver = std::function<void(const Tensor&, std::size_t, std::size_t)>;

class SliceObserverScope {
public:
    explicit SliceObserverScope(SliceObserver observer);
    ~SliceObserverScope();
    SliceObserverScope(const SliceObserverScope&) = delete;
    SliceObserverScope& operator=(const SliceObserverScope&) = delete;

private:
    SliceObserver observer_;
    const SliceObserver* previous_;
};

// ==================== Attention ====================

// Per segment and head j: softmax(Q_j K_j^T / sqrt(head_dim)) V_j, heads being
// consecutive column blocks of width head_dim. Output [segments*query_rows x
// heads*head_dim].
Tensor segmented_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                           std::size_t head_dim, const SegmentLayout& layout, const AttentionSink* sink = nullptr);
// Single-head, single-segment attention.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);
// Softmax-weighted pooling: per segment, alpha = softmax(scores), out = sum
// alpha_i x_i. scores is [segments*segment_rows x 1].
Tensor attention_pool(const Tensor& x, const Tensor& scores, std::size_t segment_rows);

// ==================== Reductions & losses ====================

Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
// Mean softmax cross-entropy over rows of logits [batch x classes].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Mean over rows of KL(softmax(teacher) || softmax(student)); teacher is a constant.
Tensor kl_softmax(const Tensor& teacher_logits, const Tensor& student_logits);
// Mean elementwise BCE of sigmoid(student) against sigmoid(teacher) targets.
Tensor bce_sigmoid(const Tensor& teacher_logits, const Tensor& student_logits);

// Lower clamp applied to every probability before a log.
inline constexpr double kLogClamp = 1e-12;

}  // namespace dst
