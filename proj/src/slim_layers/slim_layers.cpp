#include "dst/slim_layers.hpp"

#include <string>

namespace dst {

const char* width_mode_name(WidthMode mode) {
    return mode == WidthMode::SlimAll ? "slim-all" : "slim-intermediate";
}

WidthMode parse_width_mode(const std::string& name) {
    if (name == "slim-all") {
        return WidthMode::SlimAll;
    }
    if (name == "slim-intermediate") {
        return WidthMode::SlimIntermediate;
    }
    throw std::invalid_argument("unknown width mode '" + name + "'");
}

std::size_t SlimSpec::scaled(std::size_t full_extent) const {
    if ((full_extent * width) % full_width != 0) {
        throw DimensionError("slim: extent " + std::to_string(full_extent) + " does not scale to width " +
                             std::to_string(width) + "/" + std::to_string(full_width));
    }
    return full_extent * width / full_width;
}

SlimSpec make_slim_spec(std::size_t full_width, std::size_t full_heads, std::size_t width, WidthMode mode) {
    if (full_width == 0 || full_heads == 0 || width == 0 || width > full_width) {
        throw DimensionError("slim: width " + std::to_string(width) + " outside (0, " + std::to_string(full_width) +
                             "]");
    }
    if ((full_heads * width) % full_width != 0) {
        throw DimensionError("slim: H*d/D = " + std::to_string(full_heads) + "*" + std::to_string(width) + "/" +
                             std::to_string(full_width) + " is not integral");
    }
    return SlimSpec{full_width, width, full_heads, full_heads * width / full_width, mode};
}

// ==================== Width slicing ====================

namespace {

void check_master_width(const Tensor& t, const SlimSpec& spec, const char* what) {
    if (t.rows() != spec.full_width) {
        throw DimensionError(std::string("slice_width: ") + what + " has " + std::to_string(t.rows()) +
                             " input rows, spec expects " + std::to_string(spec.full_width));
    }
}

}  // namespace

MhaWeights slice_width(const MhaWeights& w, const SlimSpec& spec) {
    check_master_width(w.wq, spec, "Wq");
    if (w.heads != spec.full_heads) {
        throw DimensionError("slice_width: MHA has " + std::to_string(w.heads) + " heads, spec expects " +
                             std::to_string(spec.full_heads));
    }
    const std::size_t in = spec.model_width();
    const std::size_t attn = spec.heads * w.head_dim;
    MhaWeights s;
    s.wq = slice_leading(w.wq, in, attn);
    s.wk = slice_leading(w.wk, in, attn);
    s.wv = slice_leading(w.wv, in, attn);
    s.wo = slice_leading(w.wo, attn, in);
    s.bq = slice_leading(w.bq, attn);
    s.bk = slice_leading(w.bk, attn);
    s.bv = slice_leading(w.bv, attn);
    s.bo = slice_leading(w.bo, in);
    s.heads = spec.heads;
    s.head_dim = w.head_dim;
    return s;
}

FfnWeights slice_width(const FfnWeights& w, const SlimSpec& spec) {
    check_master_width(w.w1, spec, "W1");
    const std::size_t in = spec.model_width();
    const std::size_t hidden = spec.scaled(w.w1.cols());
    return FfnWeights{slice_leading(w.w1, in, hidden), slice_leading(w.b1, hidden), slice_leading(w.w2, in, hidden),
                      slice_leading(w.b2, in)};
}

LnWeights slice_width(const LnWeights& w, const SlimSpec& spec) {
    if (w.gamma.numel() != spec.full_width) {
        throw DimensionError("slice_width: LN width " + std::to_string(w.gamma.numel()) + " vs spec " +
                             std::to_string(spec.full_width));
    }
    const std::size_t in = spec.model_width();
    return LnWeights{slice_leading(w.gamma, in), slice_leading(w.beta, in), w.eps};
}

EncoderLayerWeights slice_width(const EncoderLayerWeights& w, const SlimSpec& spec) {
    return EncoderLayerWeights{slice_width(w.attn, spec), slice_width(w.ln1, spec), slice_width(w.ffn, spec),
                               slice_width(w.ln2, spec)};
}

DecoderLayerWeights slice_width(const DecoderLayerWeights& w, const SlimSpec& spec) {
    return DecoderLayerWeights{slice_width(w.self_attn, spec),   slice_width(w.ln1, spec),
                               slice_width(w.guided_attn, spec), slice_width(w.ln2, spec),
                               slice_width(w.ffn, spec),         slice_width(w.ln3, spec)};
}

// ==================== Layer ops ====================

namespace {

void check_segments(const Tensor& x, std::size_t segments, const char* what) {
    if (segments == 0 || x.rows() % segments != 0) {
        throw DimensionError(std::string(what) + ": " + std::to_string(x.rows()) + " rows do not split into " +
                             std::to_string(segments) + " segments");
    }
}

void check_width(const Tensor& x, std::size_t width, const char* what) {
    if (x.dim() != 2 || x.cols() != width) {
        throw DimensionError(std::string(what) + ": input " + shape_str(x.shape()) + " does not have width " +
                             std::to_string(width));
    }
}

}  // namespace

Tensor mha_sliced(const Tensor& xq, const Tensor& xkv, const MhaWeights& w, std::size_t segments,
                  const AttentionSink* sink) {
    check_width(xq, w.wq.rows(), "multi_head_attention");
    check_width(xkv, w.wk.rows(), "multi_head_attention");
    check_segments(xq, segments, "multi_head_attention");
    check_segments(xkv, segments, "multi_head_attention");
    const Tensor q = add_bias(matmul(xq, w.wq), w.bq);
    const Tensor k = add_bias(matmul(xkv, w.wk), w.bk);
    const Tensor v = add_bias(matmul(xkv, w.wv), w.bv);
    const SegmentLayout layout{segments, xq.rows() / segments, xkv.rows() / segments};
    const Tensor heads = segmented_attention(q, k, v, w.heads, w.head_dim, layout, sink);
    return add_bias(matmul(heads, w.wo), w.bo);
}

Tensor ffn_sliced(const Tensor& x, const FfnWeights& w) {
    check_width(x, w.w1.rows(), "feed_forward");
    const Tensor hidden = relu(add_bias(matmul(x, w.w1), w.b1));
    return add_bias(matmul_nt(hidden, w.w2), w.b2);
}

Tensor ln_sliced(const Tensor& x, const LnWeights& w) { return layer_norm(x, w.gamma, w.beta, w.eps); }

Tensor encoder_layer_sliced(const Tensor& x, const EncoderLayerWeights& w, std::size_t segments,
                            const LayerTaps& taps) {
    const Tensor attended = ln_sliced(add(mha_sliced(x, x, w.attn, segments, taps.self_attention), x), w.ln1);
    return ln_sliced(add(ffn_sliced(attended, w.ffn), attended), w.ln2);
}

Tensor decoder_layer_sliced(const Tensor& x_img, const Tensor& y_q, const DecoderLayerWeights& w,
                            std::size_t segments, const LayerTaps& taps) {
    if (x_img.cols() != y_q.cols()) {
        throw DimensionError("decoder_layer: image width " + std::to_string(x_img.cols()) + " vs question width " +
                             std::to_string(y_q.cols()));
    }
    const Tensor x1 =
        ln_sliced(add(mha_sliced(x_img, x_img, w.self_attn, segments, taps.self_attention), x_img), w.ln1);
    const Tensor x2 = ln_sliced(add(mha_sliced(x1, y_q, w.guided_attn, segments, taps.guided_attention), x1), w.ln2);
    return ln_sliced(add(ffn_sliced(x2, w.ffn), x2), w.ln3);
}

Tensor multi_head_attention(const Tensor& xq, const Tensor& xkv, const MhaWeights& w, const SlimSpec& spec,
                            std::size_t segments, const AttentionSink* sink) {
    return mha_sliced(xq, xkv, slice_width(w, spec), segments, sink);
}

Tensor feed_forward(const Tensor& x, const FfnWeights& w, const SlimSpec& spec) {
    return ffn_sliced(x, slice_width(w, spec));
}

Tensor layer_norm(const Tensor& x, const LnWeights& w, const SlimSpec& spec) {
    const LnWeights s = slice_width(w, spec);
    check_width(x, s.gamma.numel(), "layer_norm");
    return ln_sliced(x, s);
}

Tensor encoder_layer(const Tensor& x, const EncoderLayerWeights& w, const SlimSpec& spec, std::size_t segments,
                     const LayerTaps& taps) {
    return encoder_layer_sliced(x, slice_width(w, spec), segments, taps);
}

Tensor decoder_layer(const Tensor& x_img, const Tensor& y_q, const DecoderLayerWeights& w, const SlimSpec& spec,
                     std::size_t segments, const LayerTaps& taps) {
    return decoder_layer_sliced(x_img, y_q, slice_width(w, spec), segments, taps);
}

}  // namespace dst
