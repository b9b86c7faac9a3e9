#include "dst/cost_model.hpp"

#include <algorithm>
#include <ostream>

#include "dst/ops.hpp"

namespace dst {

// ==================== Parameters ====================

SectionCounts count_params(const ModelConfig& config, const ArchDescriptor& arch) {
    const SlimSpec spec = make_slim_spec(config.hidden, config.heads, arch.width, config.width_mode);
    SectionCounts out;
    for (const ParamSpec& p : parameter_layout(config)) {
        if (p.layer != 0 && std::find(arch.kept_layers.begin(), arch.kept_layers.end(), p.layer) == arch.kept_layers.end()) {
            continue;
        }
        std::uint64_t n = axis_extent(p.tag.rows, p.shape[0], spec);
        if (p.shape.size() == 2) {
            n *= axis_extent(p.tag.cols, p.shape[1], spec);
        }
        switch (p.section) {
            case CostSection::Backbone: out.backbone += n; break;
            case CostSection::Bridge: out.bridge += n; break;
            case CostSection::Fixed: out.fixed += n; break;
        }
    }
    return out;
}

// ==================== FLOPs ====================

namespace {

struct Dims {
    std::uint64_t d;   // residual width
    std::uint64_t a;   // active heads * head width
    std::uint64_t h;   // active heads
    std::uint64_t dh;  // head width
    std::uint64_t f;   // FFN hidden
};

std::uint64_t linear(std::uint64_t rows, std::uint64_t in, std::uint64_t out) { return 2 * rows * in * out + rows * out; }

std::uint64_t mha(const Dims& w, std::uint64_t mq, std::uint64_t nk) {
    return linear(mq, w.d, w.a) + 2 * linear(nk, w.d, w.a) + w.h * (4 * mq * nk * w.dh + 6 * mq * nk) +
           linear(mq, w.a, w.d);
}

std::uint64_t ffn(const Dims& w, std::uint64_t rows) { return linear(rows, w.d, w.f) + rows * w.f + linear(rows, w.f, w.d); }

// Residual add followed by layer norm.
std::uint64_t add_norm(const Dims& w, std::uint64_t rows) { return rows * w.d + 5 * rows * w.d; }

std::uint64_t encoder_layer(const Dims& w, std::uint64_t rows) {
    return mha(w, rows, rows) + add_norm(w, rows) + ffn(w, rows) + add_norm(w, rows);
}

std::uint64_t decoder_layer(const Dims& w, std::uint64_t n, std::uint64_t m) {
    return mha(w, n, n) + add_norm(w, n) + mha(w, n, m) + add_norm(w, n) + ffn(w, n) + add_norm(w, n);
}

// Scoring MLP d -> r -> 1 with ReLU, then softmax pooling over the rows.
std::uint64_t reduce(std::uint64_t rows, std::uint64_t d, std::uint64_t r) {
    return linear(rows, d, r) + rows * r + linear(rows, r, 1) + 5 * rows + 2 * rows * d;
}

}  // namespace

SectionCounts count_flops(const ModelConfig& config, const ArchDescriptor& arch, std::size_t m, std::size_t n) {
    const SlimSpec spec = make_slim_spec(config.hidden, config.heads, arch.width, config.width_mode);
    const std::uint64_t qm = m ? m : config.question_len;
    const std::uint64_t rn = n ? n : config.num_regions;
    const std::uint64_t E = config.embed_width();
    const std::uint64_t Fu = config.fusion_width();
    const Dims w{spec.model_width(), spec.heads * config.head_width(), spec.heads, config.head_width(),
                 spec.scaled(config.ffn_width())};
    const std::uint64_t layers = arch.kept_layers.size();

    SectionCounts out;
    out.fixed = qm * E + linear(rn, config.region_feat_dim, E) + linear(1, Fu, config.num_answers);
    if (config.variant == Variant::EncoderDecoder) {
        const std::uint64_t r = spec.scaled(config.reduce_width());
        out.bridge = 2 * qm * E * w.d + 2 * rn * E * w.d;
        out.backbone = layers * (encoder_layer(w, qm) + decoder_layer(w, rn, qm));
        out.bridge += reduce(qm, w.d, r) + reduce(rn, w.d, r);
        out.bridge += 2 * (2 * w.d * Fu) + Fu + Fu + 5 * Fu;
    } else {
        const std::uint64_t rows = 1 + qm + rn;
        out.bridge = 2 * rows * E * w.d;
        out.backbone = layers * encoder_layer(w, rows);
        out.bridge += linear(1, w.d, Fu) + 5 * Fu;
    }
    return out;
}

// ==================== Reports ====================

CostReport cost_report(const ModelConfig& config, const ArchDescriptor& arch, std::size_t m, std::size_t n) {
    return CostReport{arch, count_params(config, arch), count_flops(config, arch, m, n)};
}

std::vector<CostReport> cost_table(const ModelConfig& config, std::span<const ArchDescriptor> archs, std::size_t m,
                                   std::size_t n) {
    std::vector<CostReport> rows;
    rows.reserve(archs.size());
    for (const ArchDescriptor& a : archs) {
        rows.push_back(cost_report(config, a, m, n));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const CostReport& x, const CostReport& y) {
        if (x.total_flops() != y.total_flops()) {
            return x.total_flops() < y.total_flops();
        }
        if (x.arch.width != y.arch.width) {
            return x.arch.width < y.arch.width;
        }
        return x.arch.depth < y.arch.depth;
    });
    return rows;
}

void write_cost_csv(std::ostream& out, std::span<const CostReport> rows) {
    out << "arch_width,arch_depth,kept_layers,backbone_params,fixed_params,total_params,flops\n";
    for (const CostReport& r : rows) {
        out << r.arch.width << ',' << r.arch.depth << ',' << r.arch.kept_layers_str() << ',' << r.backbone_params()
            << ',' << r.fixed_params() << ',' << r.total_params() << ',' << r.total_flops() << '\n';
    }
}

// ==================== Touched-parameter audit ====================

struct TouchedParams::Impl {
    const ParamStore* params;
    std::vector<std::vector<bool>> marks;
    std::unique_ptr<SliceObserverScope> scope;
};

TouchedParams::TouchedParams(const ParamStore& params) : impl_(std::make_unique<Impl>()) {
    impl_->params = &params;
    for (const ParamEntry& e : params.entries()) {
        impl_->marks.emplace_back(e.value.numel(), false);
    }
    Impl* impl = impl_.get();
    impl_->scope = std::make_unique<SliceObserverScope>([impl](const Tensor& src, std::size_t rows, std::size_t cols) {
        const auto entries = impl->params->entries();
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!entries[i].value.same_node(src)) {
                continue;
            }
            std::vector<bool>& mark = impl->marks[i];
            if (cols == 0) {
                std::fill(mark.begin(), mark.begin() + static_cast<std::ptrdiff_t>(rows), true);
            } else {
                const std::size_t stride = src.cols();
                for (std::size_t r = 0; r < rows; ++r) {
                    const auto row = mark.begin() + static_cast<std::ptrdiff_t>(r * stride);
                    std::fill(row, row + static_cast<std::ptrdiff_t>(cols), true);
                }
            }
            return;
        }
    });
}

TouchedParams::~TouchedParams() = default;

SectionCounts TouchedParams::result() const {
    SectionCounts out;
    const auto entries = impl_->params->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto n = static_cast<std::uint64_t>(std::count(impl_->marks[i].begin(), impl_->marks[i].end(), true));
        switch (entries[i].section) {
            case CostSection::Backbone: out.backbone += n; break;
            case CostSection::Bridge: out.bridge += n; break;
            case CostSection::Fixed: out.fixed += n; break;
        }
    }
    return out;
}

}  // namespace dst
