#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dst/backbone.hpp"
#include "dst/cost_model.hpp"
#include "dst/trainer.hpp"

namespace dst {

// ==================== Configuration ====================

struct DataConfig {
    std::uint64_t seed = 1;
    std::size_t train_size = 20000;
    std::size_t val_size = 2000;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig teacher;
    TrainConfig dst;
    DataConfig data;

    // Desk-scale settings for the synthetic task (D=64, H=4, L=6).
    static RunConfig toy();
};

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const DataConfig& c);
nlohmann::ordered_json to_json(const RunConfig& c);

// Fields missing from `j` keep the value in `base`; unknown keys throw.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
DataConfig data_config_from_json(const nlohmann::json& j, DataConfig base = {});
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = RunConfig::toy());
RunConfig load_run_config(const std::filesystem::path& path);

// ==================== Checkpoint ====================

// Container layout:
//   "DST1" | manifest length (u64 little-endian) | UTF-8 JSON manifest |
//   f64 little-endian blob, tensors back to back in manifest order.
inline constexpr char kCheckpointMagic[4] = {'D', 'S', 'T', '1'};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& out, const SlimmableModel& model);
SlimmableModel read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const SlimmableModel& model);
SlimmableModel load_checkpoint(const std::filesystem::path& path);
// Manifest of a stored checkpoint, without the blob.
nlohmann::json read_manifest(const std::filesystem::path& path);

// ==================== Evaluation & export ====================

double evaluate(const SlimmableModel& model, const ArchDescriptor& arch, std::span<const synth::Sample> data);

// Writes the standalone submodel and returns it.
SlimmableModel export_submodel(const SlimmableModel& model, const ArchDescriptor& arch,
                               const std::filesystem::path& path);

// Every attention matrix (kept layers, active heads) for one sample.
std::vector<AttentionMap> capture_attention(const SlimmableModel& model, const ArchDescriptor& arch,
                                            const synth::Sample& sample);
void write_attention_json(std::ostream& out, const ArchDescriptor& arch, std::span<const AttentionMap> maps);

// ==================== Sweeps ====================

struct MetricsRow {
    Ratio width_ratio;
    Ratio depth_ratio;
    std::size_t width = 0;
    std::size_t depth = 0;
    std::string kept_layers;
    double accuracy = 0.0;
    std::uint64_t total_params = 0;
    std::uint64_t backbone_params = 0;
    std::uint64_t flops = 0;
    std::string split;
    std::uint64_t seed = 0;
};

// Every selected architecture, sorted by FLOPs ascending.
std::vector<MetricsRow> run_sweep(const SlimmableModel& model, std::span<const synth::Sample> data,
                                  const std::string& split, std::uint64_t seed);
void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);

// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

struct AblationRow {
    std::string study;    // "depth_strategy" or "training_strategy"
    std::string setting;  // e.g. "slim-middle", "inplace_distill"
    MetricsRow metrics;
};

struct AblationPlan {
    std::vector<DepthStrategy> depth_strategies{DepthStrategy::SlimMiddle, DepthStrategy::SlimFirst,
                                                DepthStrategy::SlimLast, DepthStrategy::SlimRandom};
    std::vector<Strategy> training_strategies{Strategy::KdFixedTeacher, Strategy::InplaceDistill,
                                              Strategy::GroundTruth};
};

// One student per setting, each initialized from `teacher` and trained with
// `config`; the depth study keeps kd_fixed_teacher and the training-strategy
// study keeps slim-middle.
std::vector<AblationRow> run_ablation(const SlimmableModel& teacher, std::span<const synth::Sample> train,
                                      std::span<const synth::Sample> val, const TrainConfig& config,
                                      const AblationPlan& plan = {});
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);

// Same weights under a different depth strategy (scores drawn from `seed`
// for slim-random).
SlimmableModel with_depth_strategy(const SlimmableModel& model, DepthStrategy strategy, std::uint64_t seed);

}  // namespace dst
