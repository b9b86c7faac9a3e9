#include "dst/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace dst {

const char* kd_kind_name(KdKind k) { return k == KdKind::KlSoftmax ? "kl-softmax" : "bce-sigmoid"; }

KdKind parse_kd_kind(const std::string& name) {
    if (name == "kl-softmax") {
        return KdKind::KlSoftmax;
    }
    if (name == "bce-sigmoid") {
        return KdKind::BceSigmoid;
    }
    throw std::invalid_argument("unknown KD loss '" + name + "'");
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::KdFixedTeacher: return "kd_fixed_teacher";
        case Strategy::InplaceDistill: return "inplace_distill";
        case Strategy::GroundTruth: return "ground_truth";
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::KdFixedTeacher, Strategy::InplaceDistill, Strategy::GroundTruth}) {
        if (name == strategy_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("unknown training strategy '" + name + "'");
}

const char* init_mode_name(InitMode m) { return m == InitMode::Teacher ? "teacher" : "random"; }

InitMode parse_init_mode(const std::string& name) {
    if (name == "teacher") {
        return InitMode::Teacher;
    }
    if (name == "random") {
        return InitMode::Random;
    }
    throw std::invalid_argument("unknown init mode '" + name + "'");
}

void TrainConfig::validate(std::size_t selected) const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw std::invalid_argument("train config: " + what);
        }
    };
    require(epochs > 0, "epochs must be positive");
    require(batch_size > 0, "batch_size must be positive");
    require(base_lr > 0.0 && std::isfinite(base_lr), "base_lr must be positive");
    require(decay_factor > 0.0 && decay_factor < 1.0, "decay_factor must lie in (0, 1)");
    require(decay_every > 0, "decay_every must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "moment decays must lie in [0, 1)");
    require(adam_eps > 0.0, "adam_eps must be positive");
    require(k >= 2, "k must be at least 2");
    if (selected != 0) {
        require(k <= selected, "k = " + std::to_string(k) + " exceeds the " + std::to_string(selected) +
                                   " selected architectures");
    }
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
    if (epoch == 0) {
        throw std::invalid_argument("lr_schedule: epochs are 1-based");
    }
    if (epoch > config.decay_after) {
        const std::size_t drops = (epoch - config.decay_after - 1) / config.decay_every + 1;
        double lr = config.base_lr;
        for (std::size_t i = 0; i < drops; ++i) {
            lr *= config.decay_factor;
        }
        return lr;
    }
    if (config.warmup_epochs > 0 && epoch <= config.warmup_epochs) {
        return config.base_lr * static_cast<double>(epoch) / static_cast<double>(config.warmup_epochs);
    }
    return config.base_lr;
}

// ==================== Optimizer ====================

Adam::Adam(const ParamStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const ParamEntry& e : params.entries()) {
        m_.emplace_back(e.value.numel(), 0.0);
        v_.emplace_back(e.value.numel(), 0.0);
    }
}

void Adam::step(ParamStore& params, double lr) {
    if (params.size() != m_.size()) {
        throw std::invalid_argument("Adam: parameter set changed size");
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    std::size_t idx = 0;
    for (ParamEntry& e : params.entries()) {
        std::vector<double>& m = m_[idx];
        std::vector<double>& v = v_[idx];
        ++idx;
        const bool has_grad = e.value.has_grad();
        const std::span<const double> g = has_grad ? e.value.grad() : std::span<const double>{};
        std::span<double> p = e.value.mutable_data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = has_grad ? g[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            if (!std::isfinite(update)) {
                throw NumericError("Adam: non-finite update for '" + e.name + "'");
            }
            p[i] -= update;
        }
    }
}

// ==================== Losses & sampling ====================

Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, KdKind kind) {
    const Tensor target = teacher_logits.detach();
    return kind == KdKind::KlSoftmax ? kl_softmax(target, student_logits) : bce_sigmoid(target, student_logits);
}

std::vector<ArchDescriptor> sample_architectures(std::span<const ArchDescriptor> selected, std::size_t k, Rng& rng) {
    if (k < 2 || k > selected.size()) {
        throw std::invalid_argument("sample_architectures: k = " + std::to_string(k) + " outside [2, " +
                                    std::to_string(selected.size()) + "]");
    }
    const ArchDescriptor& small = smallest_arch(selected);
    const ArchDescriptor& large = largest_arch(selected);
    std::vector<ArchDescriptor> omega{small, large};
    std::vector<ArchDescriptor> pool;
    for (const ArchDescriptor& a : selected) {
        if (!(a == small) && !(a == large)) {
            pool.push_back(a);
        }
    }
    // Partial Fisher-Yates: the first k-2 positions become the draws.
    for (std::size_t i = 0; i + 2 < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        omega.push_back(pool[i]);
    }
    return omega;
}

// ==================== Training ====================

void write_step_log(std::ostream& out, const StepLog& log) {
    nlohmann::ordered_json j;
    j["step"] = log.step;
    j["epoch"] = log.epoch;
    j["lr"] = log.lr;
    nlohmann::ordered_json omega = nlohmann::ordered_json::array();
    nlohmann::ordered_json losses = nlohmann::ordered_json::array();
    for (const ArchLoss& l : log.losses) {
        omega.push_back(l.arch);
        losses.push_back({{"arch", l.arch}, {"loss", l.loss}});
    }
    j["omega"] = std::move(omega);
    j["losses"] = std::move(losses);
    j["updates"] = log.updates;
    out << j.dump() << '\n';
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x73687566ull;
constexpr std::uint64_t kOmegaSalt = 0x6f6d6567ull;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(mix_seed(seed, kShuffleSalt), epoch));
    rng.shuffle(order);
    return order;
}

Batch gather(std::span<const synth::Sample> data, std::span<const std::size_t> idx) {
    std::vector<synth::Sample> picked;
    picked.reserve(idx.size());
    for (std::size_t i : idx) {
        picked.push_back(data[i]);
    }
    return make_batch(picked);
}

void check_omega(const SlimmableModel& model, std::span<const ArchDescriptor> omega) {
    if (omega.empty()) {
        throw std::invalid_argument("dst step: empty architecture set");
    }
    bool has_small = false;
    bool has_large = false;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (!model.is_selected(omega[i])) {
            throw std::invalid_argument("dst step: " + omega[i].label() + " is not a selected architecture");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (omega[j] == omega[i]) {
                throw std::invalid_argument("dst step: duplicate architecture " + omega[i].label());
            }
        }
        has_small = has_small || omega[i] == model.smallest();
        has_large = has_large || omega[i] == model.largest();
    }
    if (!has_large) {
        throw std::invalid_argument("dst step: architecture set lacks the largest submodel");
    }
    if (!has_small && omega.size() > 1) {
        throw std::invalid_argument("dst step: architecture set lacks the smallest submodel");
    }
}

template <typename StepFn>
TrainReport run_epochs(std::span<const synth::Sample> data, const TrainConfig& config, const StepCallback& on_step,
                       StepFn&& step_fn) {
    if (data.empty()) {
        throw std::invalid_argument("training: empty dataset");
    }
    TrainReport report;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, config);
        const std::vector<std::size_t> order = epoch_order(data.size(), config.seed, epoch);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        bool stop = false;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const Batch batch = gather(data, std::span<const std::size_t>(order).subspan(start, end - start));
            StepLog log = step_fn(batch, lr);
            log.step = ++report.steps;
            log.epoch = epoch;
            log.lr = lr;
            report.updates += log.updates;
            double mean = 0.0;
            for (const ArchLoss& l : log.losses) {
                mean += l.loss;
            }
            loss_sum += mean / static_cast<double>(log.losses.size());
            ++batches;
            if (on_step) {
                on_step(log);
            }
            if (config.max_steps != 0 && report.steps >= config.max_steps) {
                stop = true;
                break;
            }
        }
        report.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
        report.final_loss = report.epoch_losses.back();
        if (stop) {
            break;
        }
    }
    return report;
}

}  // namespace

TrainReport train_teacher(SlimmableModel& model, std::span<const synth::Sample> data, const TrainConfig& config,
                          const StepCallback& on_step) {
    config.validate();
    Adam adam(model.params(), config.beta1, config.beta2, config.adam_eps);
    const ArchDescriptor full = model.largest();
    return run_epochs(data, config, on_step, [&](const Batch& batch, double lr) {
        const Tensor loss = cross_entropy(model.forward(batch, full).logits, batch.labels);
        loss.backward();
        adam.step(model.params(), lr);
        model.params().zero_grad();
        StepLog log;
        log.losses.push_back({full.label(), loss.item()});
        log.updates = 1;
        return log;
    });
}

SlimmableModel init_dst(const SlimmableModel& teacher, InitMode mode, std::uint64_t seed) {
    if (mode == InitMode::Teacher) {
        return teacher.clone();
    }
    SlimmableModel fresh = SlimmableModel::create(teacher.config(), seed, EmbInit::Random);
    return SlimmableModel(teacher.config(), std::move(fresh.params()), teacher.layer_scores());
}

std::vector<ArchLoss> accumulate_dst_gradients(SlimmableModel& student, const SlimmableModel& teacher,
                                               const Batch& batch, std::span<const ArchDescriptor> omega,
                                               const TrainConfig& config) {
    check_omega(student, omega);
    std::vector<ArchLoss> losses(omega.size());
    std::vector<bool> done(omega.size(), false);

    Tensor target;
    if (config.strategy == Strategy::KdFixedTeacher) {
        NoGradGuard no_grad;
        target = teacher.forward(batch, teacher.largest()).logits;
    } else if (config.strategy == Strategy::InplaceDistill) {
        // The largest submodel learns from labels and its detached output
        // supervises the rest.
        for (std::size_t i = 0; i < omega.size(); ++i) {
            if (omega[i] == student.largest()) {
                const Tensor logits = student.forward(batch, omega[i]).logits;
                const Tensor loss = cross_entropy(logits, batch.labels);
                loss.backward();
                losses[i] = {omega[i].label(), loss.item()};
                done[i] = true;
                target = logits.detach();
            }
        }
    }

    for (std::size_t i = 0; i < omega.size(); ++i) {
        if (done[i]) {
            continue;
        }
        const Tensor logits = student.forward(batch, omega[i]).logits;
        const Tensor loss = config.strategy == Strategy::GroundTruth ? cross_entropy(logits, batch.labels)
                                                                     : kd_loss(target, logits, config.kd_kind);
        loss.backward();
        losses[i] = {omega[i].label(), loss.item()};
    }
    return losses;
}

StepLog dst_train_step(SlimmableModel& student, const SlimmableModel& teacher, const Batch& batch,
                       std::span<const ArchDescriptor> omega, const TrainConfig& config, Adam& optimizer, double lr) {
    StepLog log;
    log.losses = accumulate_dst_gradients(student, teacher, batch, omega, config);
    optimizer.step(student.params(), lr);
    student.params().zero_grad();
    log.updates = 1;
    return log;
}

TrainReport train_dst(SlimmableModel& student, const SlimmableModel& teacher, std::span<const synth::Sample> data,
                      const TrainConfig& config, const StepCallback& on_step) {
    config.validate(student.selected().size());
    Adam adam(student.params(), config.beta1, config.beta2, config.adam_eps);
    Rng omega_rng(mix_seed(config.seed, kOmegaSalt));
    return run_epochs(data, config, on_step, [&](const Batch& batch, double lr) {
        const std::vector<ArchDescriptor> omega = sample_architectures(student.selected(), config.k, omega_rng);
        return dst_train_step(student, teacher, batch, omega, config, adam, lr);
    });
}

// ==================== Evaluation ====================

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t rows = logits.rows();
    const std::size_t cols = logits.cols();
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cols; ++c) {
            if (logits.at(r, c) > logits.at(r, best)) {
                best = c;
            }
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

double evaluate_accuracy(const SlimmableModel& model, const ArchDescriptor& arch,
                         std::span<const synth::Sample> data, std::size_t batch_size) {
    if (data.empty()) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("evaluate: batch_size must be positive");
    }
    NoGradGuard no_grad;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t end = std::min(data.size(), start + batch_size);
        const Batch batch = make_batch(data.subspan(start, end - start));
        const std::vector<int> pred = argmax_rows(model.forward(batch, arch).logits);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            correct += pred[i] == batch.labels[i] ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace dst
