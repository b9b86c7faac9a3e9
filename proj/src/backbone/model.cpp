#include "dst/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dst/rng.hpp"

namespace dst {

const char* variant_name(Variant v) {
    return v == Variant::EncoderDecoder ? "encoder-decoder" : "unified-encoder";
}

Variant parse_variant(const std::string& name) {
    if (name == "encoder-decoder") {
        return Variant::EncoderDecoder;
    }
    if (name == "unified-encoder") {
        return Variant::UnifiedEncoder;
    }
    throw std::invalid_argument("unknown variant '" + name + "'");
}

// ==================== ModelConfig ====================

std::size_t ModelConfig::encoder_rows() const {
    return variant == Variant::EncoderDecoder ? question_len : 1 + question_len + num_regions;
}

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw std::invalid_argument("model config: " + what);
        }
    };
    require(hidden > 0 && heads > 0 && layers > 0, "hidden, heads and layers must be positive");
    require(head_dim > 0 || hidden % heads == 0, "hidden must be divisible by heads");
    require(vocab_size > 0 && region_feat_dim > 0 && num_answers > 0, "vocab, feature and answer sizes must be positive");
    require(question_len > 0 && num_regions > 0, "sequence lengths must be positive");
    require(ln_eps > 0.0, "ln_eps must be positive");

    const WidthGrid wg = width_grid();
    const std::vector<std::size_t> widths = wg.values(heads);
    for (std::size_t d : widths) {
        const SlimSpec spec = make_slim_spec(hidden, heads, d, width_mode);
        spec.scaled(ffn_width());
        spec.scaled(reduce_width());
    }
    depth_grid().values();
}

// ==================== Parameter layout ====================

namespace {

constexpr SliceTag kUnslimmed{};
constexpr SliceAxis F = SliceAxis::Fixed;
constexpr SliceAxis M = SliceAxis::Model;
constexpr SliceAxis Hd = SliceAxis::Heads;
constexpr SliceAxis Ff = SliceAxis::Ffn;

struct LayoutBuilder {
    std::vector<ParamSpec> out;
    std::size_t layer = 0;

    void add(std::string name, Shape shape, SliceTag tag, CostSection section, InitKind init) {
        out.push_back(ParamSpec{std::move(name), std::move(shape), tag, section, init, layer});
    }

    void mha(const std::string& p, const ModelConfig& c) {
        const std::size_t D = c.hidden;
        const std::size_t A = c.heads * c.head_width();
        for (const char* w : {"wq", "wk", "wv"}) {
            add(p + w, {D, A}, {M, Hd}, CostSection::Backbone, InitKind::Scaled);
        }
        add(p + "wo", {A, D}, {Hd, M}, CostSection::Backbone, InitKind::Scaled);
        for (const char* b : {"bq", "bk", "bv"}) {
            add(p + b, {A}, {Hd, F}, CostSection::Backbone, InitKind::Zero);
        }
        add(p + "bo", {D}, {M, F}, CostSection::Backbone, InitKind::Zero);
    }

    void ln(const std::string& p, std::size_t width, SliceAxis axis, CostSection section) {
        add(p + "gamma", {width}, {axis, F}, section, InitKind::One);
        add(p + "beta", {width}, {axis, F}, section, InitKind::Zero);
    }

    void ffn(const std::string& p, const ModelConfig& c) {
        const std::size_t D = c.hidden;
        const std::size_t Fw = c.ffn_width();
        add(p + "w1", {D, Fw}, {M, Ff}, CostSection::Backbone, InitKind::Scaled);
        add(p + "b1", {Fw}, {Ff, F}, CostSection::Backbone, InitKind::Zero);
        add(p + "w2", {D, Fw}, {M, Ff}, CostSection::Backbone, InitKind::ScaledTransposed);
        add(p + "b2", {D}, {M, F}, CostSection::Backbone, InitKind::Zero);
    }

    void reduction(const std::string& p, const ModelConfig& c) {
        const std::size_t R = c.reduce_width();
        add(p + "w1", {c.hidden, R}, {M, Ff}, CostSection::Bridge, InitKind::Scaled);
        add(p + "b1", {R}, {Ff, F}, CostSection::Bridge, InitKind::Zero);
        add(p + "w2", {R, 1}, {Ff, F}, CostSection::Bridge, InitKind::Scaled);
        add(p + "b2", {1}, kUnslimmed, CostSection::Bridge, InitKind::Zero);
    }
};

}  // namespace

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
    LayoutBuilder b;
    const std::size_t E = c.embed_width();
    const std::size_t Fu = c.fusion_width();
    const std::size_t D = c.hidden;

    b.add("emb.token", {c.vocab_size, E}, kUnslimmed, CostSection::Fixed, InitKind::Unit);
    b.add("emb.region.w", {c.region_feat_dim, E}, kUnslimmed, CostSection::Fixed, InitKind::Scaled);
    b.add("emb.region.b", {E}, kUnslimmed, CostSection::Fixed, InitKind::Zero);
    if (c.variant == Variant::UnifiedEncoder) {
        b.add("emb.cls", {1, E}, kUnslimmed, CostSection::Fixed, InitKind::Unit);
    }
    b.add("emb.proj", {E, D}, {F, M}, CostSection::Bridge, InitKind::Identity);

    for (std::size_t i = 1; i <= c.layers; ++i) {
        b.layer = i;
        const std::string p = "enc." + std::to_string(i) + ".";
        b.mha(p + "attn.", c);
        b.ln(p + "ln1.", D, M, CostSection::Backbone);
        b.ffn(p + "ffn.", c);
        b.ln(p + "ln2.", D, M, CostSection::Backbone);
    }
    if (c.variant == Variant::EncoderDecoder) {
        for (std::size_t i = 1; i <= c.layers; ++i) {
            b.layer = i;
            const std::string p = "dec." + std::to_string(i) + ".";
            b.mha(p + "self.", c);
            b.ln(p + "ln1.", D, M, CostSection::Backbone);
            b.mha(p + "guided.", c);
            b.ln(p + "ln2.", D, M, CostSection::Backbone);
            b.ffn(p + "ffn.", c);
            b.ln(p + "ln3.", D, M, CostSection::Backbone);
        }
    }
    b.layer = 0;

    if (c.variant == Variant::EncoderDecoder) {
        b.reduction("red.q.", c);
        b.reduction("red.v.", c);
        b.add("fuse.q.w", {D, Fu}, {M, F}, CostSection::Bridge, InitKind::Scaled);
        b.add("fuse.v.w", {D, Fu}, {M, F}, CostSection::Bridge, InitKind::Scaled);
        b.add("fuse.b", {Fu}, kUnslimmed, CostSection::Bridge, InitKind::Zero);
        b.ln("fuse.ln.", Fu, F, CostSection::Bridge);
    } else {
        b.add("pool.w", {D, Fu}, {M, F}, CostSection::Bridge, InitKind::Scaled);
        b.add("pool.b", {Fu}, kUnslimmed, CostSection::Bridge, InitKind::Zero);
        b.ln("pool.ln.", Fu, F, CostSection::Bridge);
    }
    b.add("cls.w", {Fu, c.num_answers}, kUnslimmed, CostSection::Fixed, InitKind::Scaled);
    b.add("cls.b", {c.num_answers}, kUnslimmed, CostSection::Fixed, InitKind::Zero);
    return b.out;
}

// ==================== Inputs ====================

Batch make_batch(std::span<const synth::Sample> samples) {
    Batch b;
    b.size = samples.size();
    b.tokens.reserve(b.size * synth::kQuestionLen);
    b.regions.reserve(b.size * synth::kRegions * synth::kFeatureDim);
    b.labels.reserve(b.size);
    for (const synth::Sample& s : samples) {
        b.tokens.insert(b.tokens.end(), s.question.begin(), s.question.end());
        b.regions.insert(b.regions.end(), s.regions.begin(), s.regions.end());
        b.labels.push_back(s.answer);
    }
    return b;
}

Tensor positional_encoding(std::size_t rows, std::size_t width) {
    std::vector<double> pe(rows * width);
    for (std::size_t pos = 0; pos < rows; ++pos) {
        for (std::size_t j = 0; j < width; ++j) {
            const double expo = static_cast<double>(j - j % 2) / static_cast<double>(width);
            const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
            pe[pos * width + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return Tensor::from({rows, width}, std::move(pe));
}

// ==================== Model ====================

namespace {

Tensor full(const Tensor& w) { return slice_leading(w, w.shape()[0], w.dim() == 2 ? w.shape()[1] : 0); }

Tensor copy_leading(const Tensor& w, const Shape& shape) {
    if (shape.size() == 1) {
        const auto d = w.data();
        return Tensor::from(shape, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(shape[0])));
    }
    std::vector<double> out;
    out.reserve(shape[0] * shape[1]);
    const auto d = w.data();
    for (std::size_t r = 0; r < shape[0]; ++r) {
        const auto row = d.begin() + static_cast<std::ptrdiff_t>(r * w.cols());
        out.insert(out.end(), row, row + static_cast<std::ptrdiff_t>(shape[1]));
    }
    return Tensor::from(shape, std::move(out));
}

MhaWeights mha_from(const ParamStore& s, const std::string& p, const ModelConfig& c) {
    return MhaWeights{s.get(p + "wq"), s.get(p + "wk"), s.get(p + "wv"), s.get(p + "wo"),
                      s.get(p + "bq"), s.get(p + "bk"), s.get(p + "bv"), s.get(p + "bo"),
                      c.heads,         c.head_width()};
}

FfnWeights ffn_from(const ParamStore& s, const std::string& p) {
    return FfnWeights{s.get(p + "w1"), s.get(p + "b1"), s.get(p + "w2"), s.get(p + "b2")};
}

LnWeights ln_from(const ParamStore& s, const std::string& p, double eps) {
    return LnWeights{s.get(p + "gamma"), s.get(p + "beta"), eps};
}

std::string renumber(const std::string& name, std::size_t from, std::size_t to) {
    for (const std::string stack : {"enc.", "dec."}) {
        const std::string old_prefix = stack + std::to_string(from) + ".";
        if (name.rfind(old_prefix, 0) == 0) {
            return stack + std::to_string(to) + "." + name.substr(old_prefix.size());
        }
    }
    throw std::logic_error("renumber: '" + name + "' is not a layer tensor");
}

}  // namespace

SlimmableModel::SlimmableModel(ModelConfig config, ParamStore params, std::vector<double> layer_scores)
    : config_(std::move(config)), params_(std::move(params)), layer_scores_(std::move(layer_scores)) {
    config_.validate();
    const std::vector<ParamSpec> layout = parameter_layout(config_);
    if (layout.size() != params_.size()) {
        throw std::invalid_argument("model: expected " + std::to_string(layout.size()) + " tensors, got " +
                                    std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const ParamEntry& e = params_.entries()[i];
        if (e.name != layout[i].name) {
            throw std::invalid_argument("model: tensor " + std::to_string(i) + " is '" + e.name + "', expected '" +
                                        layout[i].name + "'");
        }
        if (e.value.shape() != layout[i].shape) {
            throw DimensionError("model: '" + e.name + "' has shape " + shape_str(e.value.shape()) + ", expected " +
                                 shape_str(layout[i].shape));
        }
    }
    grid_ = build_grid(config_.width_grid(), config_.depth_grid(), config_.heads, layer_scores_);
    selected_ = config_.triangle ? triangle_select(grid_) : select_all(grid_);
}

SlimmableModel SlimmableModel::create(const ModelConfig& config, std::uint64_t seed, EmbInit emb_init) {
    config.validate();
    Rng depth_rng(mix_seed(seed, 0x64657074ull));
    std::vector<double> scores = depth_scores(config.depth_strategy, config.layers, depth_rng);

    Rng rng(mix_seed(seed, 0x696e6974ull));
    ParamStore store;
    for (const ParamSpec& p : parameter_layout(config)) {
        const std::size_t n = shape_numel(p.shape);
        std::vector<double> v(n, 0.0);
        InitKind init = p.init;
        if (init == InitKind::Identity && emb_init == EmbInit::Random) {
            init = InitKind::Scaled;
        }
        switch (init) {
            case InitKind::Zero: break;
            case InitKind::One: std::fill(v.begin(), v.end(), 1.0); break;
            case InitKind::Identity:
                for (std::size_t i = 0; i < std::min(p.shape[0], p.shape[1]); ++i) {
                    v[i * p.shape[1] + i] = 1.0;
                }
                break;
            case InitKind::Unit:
                for (double& x : v) {
                    x = rng.normal();
                }
                break;
            case InitKind::Scaled:
            case InitKind::ScaledTransposed: {
                const std::size_t fan_in = init == InitKind::Scaled ? p.shape[0] : p.shape[1];
                const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
                for (double& x : v) {
                    x = rng.normal(0.0, sd);
                }
                break;
            }
        }
        store.add(p.name, Tensor::from(p.shape, std::move(v), true), p.tag, p.section);
    }
    return SlimmableModel(config, std::move(store), std::move(scores));
}

bool SlimmableModel::is_selected(const ArchDescriptor& arch) const {
    return std::find(selected_.begin(), selected_.end(), arch) != selected_.end();
}

const ArchDescriptor& SlimmableModel::find_arch(const Ratio& width, const Ratio& depth) const {
    for (const ArchDescriptor& a : selected_) {
        if (a.width_ratio == width && a.depth_ratio == depth) {
            return a;
        }
    }
    auto term = [](const Ratio& r, const char* axis) { return (r == Ratio::make(1, 1) ? "" : r.str()) + axis; };
    throw std::out_of_range("architecture (" + term(width, "D") + "," + term(depth, "L") + ") is not in the selected set");
}

SlimSpec SlimmableModel::spec_for(const ArchDescriptor& arch) const {
    return make_slim_spec(config_.hidden, config_.heads, arch.width, config_.width_mode);
}

void SlimmableModel::check_arch(const ArchDescriptor& arch) const {
    if (!is_selected(arch)) {
        throw std::invalid_argument("architecture " + arch.label() + " (width " + std::to_string(arch.width) +
                                    ", layers " + arch.kept_layers_str() + ") is not in the selected set");
    }
}

EncoderLayerWeights SlimmableModel::encoder_weights(std::size_t layer) const {
    const std::string p = "enc." + std::to_string(layer) + ".";
    const double eps = config_.ln_eps;
    return EncoderLayerWeights{mha_from(params_, p + "attn.", config_), ln_from(params_, p + "ln1.", eps),
                               ffn_from(params_, p + "ffn."), ln_from(params_, p + "ln2.", eps)};
}

DecoderLayerWeights SlimmableModel::decoder_weights(std::size_t layer) const {
    const std::string p = "dec." + std::to_string(layer) + ".";
    const double eps = config_.ln_eps;
    return DecoderLayerWeights{mha_from(params_, p + "self.", config_),   ln_from(params_, p + "ln1.", eps),
                               mha_from(params_, p + "guided.", config_), ln_from(params_, p + "ln2.", eps),
                               ffn_from(params_, p + "ffn."),             ln_from(params_, p + "ln3.", eps)};
}

EmbeddedInputs SlimmableModel::embed_inputs(const Batch& batch) const {
    const std::size_t B = batch.size;
    const std::size_t m = config_.question_len;
    const std::size_t n = config_.num_regions;
    const std::size_t E = config_.embed_width();
    if (B == 0) {
        throw std::invalid_argument("embed_inputs: empty batch");
    }
    if (batch.tokens.size() != B * m || batch.regions.size() != B * n * config_.region_feat_dim) {
        throw DimensionError("embed_inputs: batch does not match m=" + std::to_string(m) + ", n=" +
                             std::to_string(n) + ", feat=" + std::to_string(config_.region_feat_dim));
    }
    for (int t : batch.tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
            throw std::out_of_range("embed_inputs: out-of-vocab token " + std::to_string(t));
        }
    }
    const Tensor pos = positional_encoding(m, E);
    std::vector<double> tiled;
    tiled.reserve(B * m * E);
    for (std::size_t b = 0; b < B; ++b) {
        tiled.insert(tiled.end(), pos.data().begin(), pos.data().end());
    }
    EmbeddedInputs out;
    out.question = add(embedding(full(params_.get("emb.token")), batch.tokens), Tensor::from({B * m, E}, std::move(tiled)));
    const Tensor feats = Tensor::from({B * n, config_.region_feat_dim}, batch.regions);
    out.regions = add_bias(matmul(feats, full(params_.get("emb.region.w"))), full(params_.get("emb.region.b")));
    return out;
}

Tensor SlimmableModel::project_embeddings(const Tensor& e, const SlimSpec& spec) const {
    const Tensor& w = params_.get("emb.proj");
    if (e.dim() != 2 || e.cols() != w.rows()) {
        throw DimensionError("project_embeddings: input width " + std::to_string(e.cols()) + ", expected " +
                             std::to_string(w.rows()));
    }
    return matmul(e, slice_leading(w, w.rows(), spec.model_width()));
}

Tensor SlimmableModel::attentional_reduce(const Tensor& f, const std::string& head, const SlimSpec& spec,
                                          std::size_t segment_rows) const {
    const std::string p = "red." + head + ".";
    const std::size_t in = spec.model_width();
    const std::size_t hidden = spec.scaled(config_.reduce_width());
    if (f.dim() != 2 || f.cols() != in) {
        throw DimensionError("attentional_reduce: input " + shape_str(f.shape()) + " does not have width " +
                             std::to_string(in));
    }
    const Tensor w1 = slice_leading(params_.get(p + "w1"), in, hidden);
    const Tensor b1 = slice_leading(params_.get(p + "b1"), hidden);
    const Tensor w2 = slice_leading(params_.get(p + "w2"), hidden, 1);
    const Tensor b2 = slice_leading(params_.get(p + "b2"), 1);
    const Tensor scores = add_bias(matmul(relu(add_bias(matmul(f, w1), b1)), w2), b2);
    return attention_pool(f, scores, segment_rows);
}

Tensor SlimmableModel::fuse_and_classify(const Tensor& fq, const Tensor& fv, const SlimSpec& spec) const {
    const std::size_t in = spec.model_width();
    if (fq.cols() != in || fv.cols() != in || fq.rows() != fv.rows()) {
        throw DimensionError("fuse_and_classify: inputs " + shape_str(fq.shape()) + " and " + shape_str(fv.shape()) +
                             " do not both have width " + std::to_string(in));
    }
    Tensor z;
    {
        CostSectionGuard section(CostSection::Bridge);
        const std::size_t Fu = config_.fusion_width();
        const Tensor mixed = add(matmul(fq, slice_leading(params_.get("fuse.q.w"), in, Fu)),
                                 matmul(fv, slice_leading(params_.get("fuse.v.w"), in, Fu)));
        z = layer_norm(add_bias(mixed, full(params_.get("fuse.b"))), full(params_.get("fuse.ln.gamma")),
                       full(params_.get("fuse.ln.beta")), config_.ln_eps);
    }
    return classify(z);
}

Tensor SlimmableModel::classify(const Tensor& z) const {
    CostSectionGuard section(CostSection::Fixed);
    return add_bias(matmul(z, full(params_.get("cls.w"))), full(params_.get("cls.b")));
}

ForwardOutput SlimmableModel::forward(const Batch& batch, const ArchDescriptor& arch,
                                      const ForwardOptions& options) const {
    check_arch(arch);
    const SlimSpec spec = spec_for(arch);
    const std::size_t B = batch.size;
    const std::size_t m = config_.question_len;
    const std::size_t n = config_.num_regions;

    std::vector<AttentionSink> sinks;
    auto make_sink = [&](const std::string& stack, std::size_t layer, const std::string& kind) {
        return AttentionSink([&options, stack, layer, kind](std::size_t seg, std::size_t head, std::size_t rows,
                                                            std::size_t cols, std::span<const double> probs) {
            if (seg == options.capture_sample) {
                options.attention->push_back(
                    AttentionMap{stack, layer, kind, head, rows, cols, std::vector<double>(probs.begin(), probs.end())});
            }
        });
    };
    const bool capture = options.attention != nullptr;

    EmbeddedInputs emb;
    Tensor cls_rows;
    {
        CostSectionGuard section(CostSection::Fixed);
        emb = embed_inputs(batch);
        if (config_.variant == Variant::UnifiedEncoder) {
            cls_rows = embedding(full(params_.get("emb.cls")), std::vector<int>(B, 0));
        }
    }

    if (config_.variant == Variant::EncoderDecoder) {
        Tensor q;
        Tensor v;
        {
            CostSectionGuard section(CostSection::Bridge);
            q = project_embeddings(emb.question, spec);
            v = project_embeddings(emb.regions, spec);
        }
        {
            CostSectionGuard section(CostSection::Backbone);
            for (std::size_t layer : arch.kept_layers) {
                const AttentionSink sink = capture ? make_sink("encoder", layer, "self") : AttentionSink{};
                const LayerTaps taps{capture ? &sink : nullptr, nullptr};
                q = encoder_layer(q, encoder_weights(layer), spec, B, taps);
            }
            for (std::size_t layer : arch.kept_layers) {
                const AttentionSink self_sink = capture ? make_sink("decoder", layer, "self") : AttentionSink{};
                const AttentionSink guided_sink = capture ? make_sink("decoder", layer, "guided") : AttentionSink{};
                const LayerTaps taps{capture ? &self_sink : nullptr, capture ? &guided_sink : nullptr};
                v = decoder_layer(v, q, decoder_weights(layer), spec, B, taps);
            }
        }
        Tensor fq;
        Tensor fv;
        {
            CostSectionGuard section(CostSection::Bridge);
            fq = attentional_reduce(q, "q", spec, m);
            fv = attentional_reduce(v, "v", spec, n);
        }
        return ForwardOutput{fuse_and_classify(fq, fv, spec)};
    }

    const std::size_t rows = 1 + m + n;
    Tensor x;
    {
        CostSectionGuard section(CostSection::Bridge);
        const Tensor tokens = concat_segments({cls_rows, emb.question, emb.regions}, {1, m, n}, B);
        x = project_embeddings(tokens, spec);
    }
    {
        CostSectionGuard section(CostSection::Backbone);
        for (std::size_t layer : arch.kept_layers) {
            const AttentionSink sink = capture ? make_sink("encoder", layer, "self") : AttentionSink{};
            const LayerTaps taps{capture ? &sink : nullptr, nullptr};
            x = encoder_layer(x, encoder_weights(layer), spec, B, taps);
        }
    }
    Tensor z;
    {
        CostSectionGuard section(CostSection::Bridge);
        const std::size_t in = spec.model_width();
        const Tensor cls_out = take_segment_row(x, rows, 0);
        const Tensor pooled = add_bias(matmul(cls_out, slice_leading(params_.get("pool.w"), in, config_.fusion_width())),
                                       full(params_.get("pool.b")));
        z = layer_norm(pooled, full(params_.get("pool.ln.gamma")), full(params_.get("pool.ln.beta")), config_.ln_eps);
    }
    return ForwardOutput{classify(z)};
}

SlimmableModel SlimmableModel::clone() const { return SlimmableModel(config_, params_.clone(), layer_scores_); }

SlimmableModel SlimmableModel::export_submodel(const ArchDescriptor& arch) const {
    check_arch(arch);
    const SlimSpec spec = spec_for(arch);

    ModelConfig sub = config_;
    sub.hidden = spec.model_width();
    sub.heads = spec.heads;
    sub.head_dim = config_.head_width();
    sub.ffn_hidden = spec.scaled(config_.ffn_width());
    sub.reduce_hidden = spec.scaled(config_.reduce_width());
    sub.embed_dim = config_.embed_width();
    sub.fusion_dim = config_.fusion_width();
    sub.layers = arch.depth;
    sub.width_ratios = {Ratio::make(1, 1)};
    sub.depth_ratios = {Ratio::make(1, 1)};
    sub.depth_strategy = DepthStrategy::SlimFirst;

    const std::vector<ParamSpec> layout = parameter_layout(config_);
    ParamStore store;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const ParamEntry& e = params_.entries()[i];
        std::string name = e.name;
        if (layout[i].layer != 0) {
            const auto it = std::find(arch.kept_layers.begin(), arch.kept_layers.end(), layout[i].layer);
            if (it == arch.kept_layers.end()) {
                continue;
            }
            name = renumber(e.name, layout[i].layer, static_cast<std::size_t>(it - arch.kept_layers.begin()) + 1);
        }
        store.add(std::move(name), copy_leading(e.value, e.sliced_shape(spec)), e.tag, e.section);
    }
    Rng unused(0);
    return SlimmableModel(sub, std::move(store), depth_scores(DepthStrategy::SlimFirst, arch.depth, unused));
}

}  // namespace dst
