#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dst/param_store.hpp"
#include "dst/slim_layers.hpp"
#include "dst/slim_space.hpp"
#include "dst/synthdata.hpp"

namespace dst {

enum class Variant { EncoderDecoder, UnifiedEncoder };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

// Reference dimensions of the master model. Zero-valued derived widths
// resolve to their defaults: head_dim = hidden / heads, ffn = 4 * hidden,
// reduce = embed = fusion = hidden. Exported standalone submodels set them
// explicitly.
struct ModelConfig {
    Variant variant = Variant::EncoderDecoder;
    std::size_t hidden = 64;  // D
    std::size_t heads = 4;    // H
    std::size_t layers = 6;   // L
    std::size_t head_dim = 0;
    std::size_t ffn_hidden = 0;
    std::size_t reduce_hidden = 0;
    std::size_t embed_dim = 0;
    std::size_t fusion_dim = 0;

    std::size_t vocab_size = synth::kVocab;
    std::size_t region_feat_dim = synth::kFeatureDim;
    std::size_t num_answers = synth::kAnswers;
    std::size_t question_len = synth::kQuestionLen;  // m
    std::size_t num_regions = synth::kRegions;       // n

    std::vector<Ratio> width_ratios = WidthGrid::standard(1).ratios;
    std::vector<Ratio> depth_ratios = DepthGrid::standard(1).ratios;
    DepthStrategy depth_strategy = DepthStrategy::SlimMiddle;
    WidthMode width_mode = WidthMode::SlimAll;
    bool triangle = true;
    double ln_eps = 1e-6;

    std::size_t head_width() const { return head_dim ? head_dim : hidden / heads; }
    std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : 4 * hidden; }
    std::size_t reduce_width() const { return reduce_hidden ? reduce_hidden : hidden; }
    std::size_t embed_width() const { return embed_dim ? embed_dim : hidden; }
    std::size_t fusion_width() const { return fusion_dim ? fusion_dim : hidden; }
    // Rows per sample entering the first layer of the question-side stack.
    std::size_t encoder_rows() const;

    WidthGrid width_grid() const { return WidthGrid{hidden, width_ratios}; }
    DepthGrid depth_grid() const { return DepthGrid{layers, depth_ratios}; }

    // Throws std::invalid_argument / DimensionError on inconsistent settings.
    void validate() const;
};

// ==================== Parameter layout ====================

// Scaled: normal(0, 1/sqrt(fan_in)); ScaledTransposed takes fan_in from the
// column count (weights applied transposed); Unit: normal(0, 1).
enum class InitKind { Scaled, ScaledTransposed, Unit, Zero, One, Identity };

struct ParamSpec {
    std::string name;
    Shape shape;
    SliceTag tag;
    CostSection section = CostSection::Backbone;
    InitKind init = InitKind::Scaled;
    std::size_t layer = 0;  // 1-based stack index, 0 outside the stacks
};

// Every master tensor in canonical order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

enum class EmbInit { Identity, Random };

// ==================== Inputs & outputs ====================

// Samples stacked by rows; tokens are [size x m], regions [size*n x feat].
struct Batch {
    std::size_t size = 0;
    std::vector<int> tokens;
    std::vector<double> regions;
    std::vector<int> labels;
};

Batch make_batch(std::span<const synth::Sample> samples);

struct AttentionMap {
    std::string stack;  // "encoder" or "decoder"
    std::size_t layer = 0;  // original 1-based index
    std::string kind;   // "self" or "guided"
    std::size_t head = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> probs;
};

struct ForwardOptions {
    // When set, receives every attention matrix of sample `capture_sample`.
    std::vector<AttentionMap>* attention = nullptr;
    std::size_t capture_sample = 0;
};

struct ForwardOutput {
    Tensor logits;  // [batch x num_answers]
};

struct EmbeddedInputs {
    Tensor question;  // [B*m x E], token table + positions
    Tensor regions;   // [B*n x E]
};

// Sinusoidal position table [rows x width].
Tensor positional_encoding(std::size_t rows, std::size_t width);

// ==================== Model ====================

class SlimmableModel {
public:
    // Validates `params` against parameter_layout(config).
    SlimmableModel(ModelConfig config, ParamStore params, std::vector<double> layer_scores);

    // Fresh weights. Layer scores come from the depth strategy, drawn from the
    // same seed when the strategy is random.
    static SlimmableModel create(const ModelConfig& config, std::uint64_t seed, EmbInit emb_init = EmbInit::Identity);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<double>& layer_scores() const { return layer_scores_; }
    const ArchGrid& grid() const { return grid_; }
    const std::vector<ArchDescriptor>& selected() const { return selected_; }
    const ArchDescriptor& largest() const { return largest_arch(selected_); }
    const ArchDescriptor& smallest() const { return smallest_arch(selected_); }
    bool is_selected(const ArchDescriptor& arch) const;
    // Throws std::out_of_range unless (width, depth) ratios name a selected arch.
    const ArchDescriptor& find_arch(const Ratio& width, const Ratio& depth) const;
    SlimSpec spec_for(const ArchDescriptor& arch) const;

    ForwardOutput forward(const Batch& batch, const ArchDescriptor& arch, const ForwardOptions& options = {}) const;

    EmbeddedInputs embed_inputs(const Batch& batch) const;
    Tensor project_embeddings(const Tensor& e, const SlimSpec& spec) const;
    // head is "q" or "v"; f holds `segment_rows` rows per sample.
    Tensor attentional_reduce(const Tensor& f, const std::string& head, const SlimSpec& spec,
                              std::size_t segment_rows) const;
    Tensor fuse_and_classify(const Tensor& fq, const Tensor& fv, const SlimSpec& spec) const;

    EncoderLayerWeights encoder_weights(std::size_t layer) const;
    DecoderLayerWeights decoder_weights(std::size_t layer) const;

    // Deep copy with fresh storage.
    SlimmableModel clone() const;
    // Self-contained model holding exactly the tensors `arch` reads, at
    // their sliced shapes, with layers renumbered 1..l.
    SlimmableModel export_submodel(const ArchDescriptor& arch) const;

private:
    void check_arch(const ArchDescriptor& arch) const;
    Tensor classify(const Tensor& z) const;

    ModelConfig config_;
    ParamStore params_;
    std::vector<double> layer_scores_;
    ArchGrid grid_;
    std::vector<ArchDescriptor> selected_;
};

}  // namespace dst
