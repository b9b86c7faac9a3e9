#pragma once

#include <cstddef>
#include <string>

#include "dst/ops.hpp"
#include "dst/tensor.hpp"

namespace dst {

// Which dimensions width slimming touches.
//   SlimAll          input, output and intermediate widths all shrink to d.
//   SlimIntermediate only the head count and FFN hidden width shrink; layer
//                    inputs and outputs stay at the full width.
enum class WidthMode { SlimAll, SlimIntermediate };

const char* width_mode_name(WidthMode mode);
WidthMode parse_width_mode(const std::string& name);

// Active width of one submodel. `heads` is H * width / full_width; per-head
// width never changes.
struct SlimSpec {
    std::size_t full_width = 0;
    std::size_t width = 0;
    std::size_t full_heads = 0;
    std::size_t heads = 0;
    WidthMode mode = WidthMode::SlimAll;

    // Width of the residual stream the layer reads and writes.
    std::size_t model_width() const { return mode == WidthMode::SlimAll ? width : full_width; }
    // Scales a slimmable extent by width / full_width.
    std::size_t scaled(std::size_t full_extent) const;
    bool is_full() const { return width == full_width; }
};

// Validates d <= D and that H * d / D is a positive integer.
SlimSpec make_slim_spec(std::size_t full_width, std::size_t full_heads, std::size_t width,
                        WidthMode mode = WidthMode::SlimAll);

// Wq/Wk/Wv are [D x H*D_H] with head j in columns [j*D_H, (j+1)*D_H); Wo is
// [H*D_H x D].
struct MhaWeights {
    Tensor wq, wk, wv, wo;
    Tensor bq, bk, bv, bo;
    std::size_t heads = 0;
    std::size_t head_dim = 0;
};

// W1 and W2 are both [D x 4D]; W2 is applied transposed.
struct FfnWeights {
    Tensor w1, b1, w2, b2;
};

struct LnWeights {
    Tensor gamma, beta;
    double eps = 1e-6;
};

struct EncoderLayerWeights {
    MhaWeights attn;
    LnWeights ln1;
    FfnWeights ffn;
    LnWeights ln2;
};

struct DecoderLayerWeights {
    MhaWeights self_attn;
    LnWeights ln1;
    MhaWeights guided_attn;
    LnWeights ln2;
    FfnWeights ffn;
    LnWeights ln3;
};

// ==================== Width slicing ====================
//
// Every slice is the leading block of the master tensor, so a narrower
// submodel always reads a sub-block of what a wider one reads. Gradients of a
// slice flow back into the same block of the master.

MhaWeights slice_width(const MhaWeights& w, const SlimSpec& spec);
FfnWeights slice_width(const FfnWeights& w, const SlimSpec& spec);
LnWeights slice_width(const LnWeights& w, const SlimSpec& spec);
EncoderLayerWeights slice_width(const EncoderLayerWeights& w, const SlimSpec& spec);
DecoderLayerWeights slice_width(const DecoderLayerWeights& w, const SlimSpec& spec);

// ==================== Layer ops ====================
//
// Inputs are batched: `segments` samples stacked by rows, with attention
// confined to each sample's rows. The *_sliced variants run on weights that
// are already at the active width.

struct LayerTaps {
    const AttentionSink* self_attention = nullptr;
    const AttentionSink* guided_attention = nullptr;
};

Tensor mha_sliced(const Tensor& xq, const Tensor& xkv, const MhaWeights& w, std::size_t segments,
                  const AttentionSink* sink = nullptr);
Tensor ffn_sliced(const Tensor& x, const FfnWeights& w);
Tensor ln_sliced(const Tensor& x, const LnWeights& w);
Tensor encoder_layer_sliced(const Tensor& x, const EncoderLayerWeights& w, std::size_t segments,
                            const LayerTaps& taps = {});
Tensor decoder_layer_sliced(const Tensor& x_img, const Tensor& y_q, const DecoderLayerWeights& w,
                            std::size_t segments, const LayerTaps& taps = {});

Tensor multi_head_attention(const Tensor& xq, const Tensor& xkv, const MhaWeights& w, const SlimSpec& spec,
                            std::size_t segments = 1, const AttentionSink* sink = nullptr);
Tensor feed_forward(const Tensor& x, const FfnWeights& w, const SlimSpec& spec);
Tensor layer_norm(const Tensor& x, const LnWeights& w, const SlimSpec& spec);
// LN(MHA(X,X,X) + X), then LN(FFN(.) + .)
Tensor encoder_layer(const Tensor& x, const EncoderLayerWeights& w, const SlimSpec& spec, std::size_t segments = 1,
                     const LayerTaps& taps = {});
// Self-attention, guided attention over y_q, FFN; each followed by residual + LN.
Tensor decoder_layer(const Tensor& x_img, const Tensor& y_q, const DecoderLayerWeights& w, const SlimSpec& spec,
                     std::size_t segments = 1, const LayerTaps& taps = {});

}  // namespace dst
