#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dst/backbone.hpp"
#include "dst/rng.hpp"

namespace dst {

enum class KdKind { KlSoftmax, BceSigmoid };
enum class Strategy { KdFixedTeacher, InplaceDistill, GroundTruth };
enum class InitMode { Teacher, Random };

const char* kd_kind_name(KdKind k);
KdKind parse_kd_kind(const std::string& name);
const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);
const char* init_mode_name(InitMode m);
InitMode parse_init_mode(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 13;
    std::size_t batch_size = 64;
    double base_lr = 1e-4;
    std::size_t warmup_epochs = 3;
    double decay_factor = 0.2;
    std::size_t decay_every = 2;
    std::size_t decay_after = 10;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double adam_eps = 1e-9;
    std::size_t k = 4;
    KdKind kd_kind = KdKind::KlSoftmax;
    Strategy strategy = Strategy::KdFixedTeacher;
    InitMode init = InitMode::Teacher;
    std::uint64_t seed = 1;
    // Stops after this many optimizer updates when non-zero.
    std::size_t max_steps = 0;

    // `selected` is |S|; k is only checked when it is non-zero.
    void validate(std::size_t selected = 0) const;
};

// Learning rate for 1-based `epoch`: linear warmup base*e/warmup, then base,
// then base * factor^(floor((e - decay_after - 1) / decay_every) + 1).
double lr_schedule(std::size_t epoch, const TrainConfig& config);

// ==================== Optimizer ====================

// Adaptive-moment update with one pair of moment buffers per master tensor.
// Tensors without a gradient this step are updated as if it were zero.
class Adam {
public:
    Adam(const ParamStore& params, double beta1, double beta2, double eps);

    void step(ParamStore& params, double lr);
    std::size_t steps() const { return steps_; }

private:
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t steps_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// ==================== Losses & sampling ====================

// Teacher logits are treated as constants.
Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, KdKind kind);

// {a_s, a_l} followed by k - 2 distinct uniform draws from the rest.
std::vector<ArchDescriptor> sample_architectures(std::span<const ArchDescriptor> selected, std::size_t k, Rng& rng);

// ==================== Training ====================

struct ArchLoss {
    std::string arch;
    double loss = 0.0;
};

struct StepLog {
    std::size_t step = 0;  // 1-based optimizer update index
    std::size_t epoch = 0;
    double lr = 0.0;
    std::vector<ArchLoss> losses;  // in Omega order
    std::size_t updates = 0;       // optimizer updates applied by this step
};

using StepCallback = std::function<void(const StepLog&)>;

// Writes one JSON object per line.
void write_step_log(std::ostream& out, const StepLog& log);

struct TrainReport {
    std::size_t steps = 0;
    std::size_t updates = 0;
    double final_loss = 0.0;  // mean loss of the last epoch
    std::vector<double> epoch_losses;
};

// Cross-entropy training of the full architecture.
TrainReport train_teacher(SlimmableModel& model, std::span<const synth::Sample> data, const TrainConfig& config,
                          const StepCallback& on_step = {});

// Teacher mode copies every tensor; random mode draws fresh weights (and a
// random W_emb) from config.seed with the teacher's layer scores.
SlimmableModel init_dst(const SlimmableModel& teacher, InitMode mode, std::uint64_t seed);

// One iteration of the self-distillation loop: teacher forward once
// (detached), forward/backward of every arch in omega with gradients summed
// into the master tensors, then exactly one optimizer update.
StepLog dst_train_step(SlimmableModel& student, const SlimmableModel& teacher, const Batch& batch,
                       std::span<const ArchDescriptor> omega, const TrainConfig& config, Adam& optimizer, double lr);

// Same as dst_train_step without the optimizer update; returns per-arch
// losses with gradients left in the master buffers.
std::vector<ArchLoss> accumulate_dst_gradients(SlimmableModel& student, const SlimmableModel& teacher,
                                               const Batch& batch, std::span<const ArchDescriptor> omega,
                                               const TrainConfig& config);

TrainReport train_dst(SlimmableModel& student, const SlimmableModel& teacher, std::span<const synth::Sample> data,
                      const TrainConfig& config, const StepCallback& on_step = {});

// ==================== Evaluation ====================

// Fraction of samples whose argmax logit equals the label.
double evaluate_accuracy(const SlimmableModel& model, const ArchDescriptor& arch,
                         std::span<const synth::Sample> data, std::size_t batch_size = 256);

// First index of the largest logit in each row.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace dst
