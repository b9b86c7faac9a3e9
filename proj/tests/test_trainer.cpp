#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "dst/ops.hpp"
#include "dst/trainer.hpp"
#include <json.hpp>
#include "test_util.hpp"

using namespace dst;
using dst::testing::bitwise_equal;
using dst::testing::jitter_params;
using dst::testing::small_config;

namespace {

TrainConfig paper_schedule() {
    TrainConfig c;  // base 1e-4, warmup 3, decay 1/5 every 2 after epoch 10
    return c;
}

TrainConfig quick_config(std::size_t max_steps = 3) {
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 4;
    c.base_lr = 1e-3;
    c.warmup_epochs = 0;
    c.max_steps = max_steps;
    c.seed = 11;
    return c;
}

std::vector<synth::Sample> data(std::size_t n, std::uint64_t seed = 3) {
    return synth::generate_dataset(seed, n, synth::Split::Train);
}

SlimmableModel teacher_model(std::uint64_t seed = 1) {
    SlimmableModel m = SlimmableModel::create(small_config(), seed);
    jitter_params(m, seed + 50);
    return m;
}

ParamStore single_scalar(double value) {
    ParamStore store;
    store.add("x", Tensor::from({1}, {value}, true), SliceTag{}, CostSection::Backbone);
    return store;
}

// Scalar grads per tensor; empty vector when a tensor has no gradient.
std::map<std::string, std::vector<double>> grads_of(const ParamStore& store) {
    std::map<std::string, std::vector<double>> out;
    for (const ParamEntry& e : store.entries()) {
        out[e.name] = e.value.has_grad() ? std::vector<double>(e.value.grad().begin(), e.value.grad().end())
                                         : std::vector<double>(e.value.numel(), 0.0);
    }
    return out;
}

}  // namespace

// ==================== Schedule ====================

TEST(LrSchedule, DecayStepsOfOneFifth) {
    const TrainConfig c = paper_schedule();
    EXPECT_NEAR(lr_schedule(10, c), 1e-4, 1e-18);
    EXPECT_NEAR(lr_schedule(11, c), 2e-5, 1e-18);
    EXPECT_NEAR(lr_schedule(12, c), 2e-5, 1e-18);
    EXPECT_NEAR(lr_schedule(13, c), 4e-6, 1e-18);
}

TEST(LrSchedule, LinearWarmupThenBase) {
    const TrainConfig c = paper_schedule();
    EXPECT_NEAR(lr_schedule(1, c), 1e-4 / 3.0, 1e-18);
    EXPECT_NEAR(lr_schedule(2, c), 2e-4 / 3.0, 1e-18);
    EXPECT_EQ(lr_schedule(3, c), 1e-4);
    EXPECT_EQ(lr_schedule(5, c), 1e-4);
    EXPECT_THROW(lr_schedule(0, c), std::invalid_argument);
}

TEST(LrSchedule, NonIncreasingAfterWarmupProperty) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        TrainConfig c;
        c.warmup_epochs = static_cast<std::size_t>(rng.below(4));
        c.decay_after = c.warmup_epochs + static_cast<std::size_t>(rng.below(6));
        c.decay_every = 1 + static_cast<std::size_t>(rng.below(3));
        c.decay_factor = rng.uniform(0.05, 0.95);
        for (std::size_t e = std::max<std::size_t>(c.warmup_epochs, 1); e < 30; ++e) {
            ASSERT_LE(lr_schedule(e + 1, c), lr_schedule(e, c));
        }
    }
}

TEST(TrainConfigValidate, RejectsBadValues) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate(10));
    c.k = 1;
    EXPECT_THROW(c.validate(10), std::invalid_argument);
    c.k = 11;
    EXPECT_THROW(c.validate(10), std::invalid_argument);
    c = TrainConfig{};
    c.decay_factor = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Names, RoundTrip) {
    for (KdKind k : {KdKind::KlSoftmax, KdKind::BceSigmoid}) {
        EXPECT_EQ(parse_kd_kind(kd_kind_name(k)), k);
    }
    for (Strategy s : {Strategy::KdFixedTeacher, Strategy::InplaceDistill, Strategy::GroundTruth}) {
        EXPECT_EQ(parse_strategy(strategy_name(s)), s);
    }
    for (InitMode m : {InitMode::Teacher, InitMode::Random}) {
        EXPECT_EQ(parse_init_mode(init_mode_name(m)), m);
    }
    EXPECT_THROW(parse_strategy("distill-harder"), std::invalid_argument);
}

// ==================== Optimizer ====================

TEST(AdamOptimizer, ZeroGradientsLeaveParamsUnchanged) {
    SlimmableModel m = teacher_model();
    const std::uint64_t before = m.params().checksum();
    Adam adam(m.params(), 0.9, 0.98, 1e-9);
    adam.step(m.params(), 1e-3);
    EXPECT_EQ(m.params().checksum(), before);
    EXPECT_EQ(adam.steps(), 1u);
}

TEST(AdamOptimizer, FirstStepWithUnitGradientMovesByLr) {
    ParamStore store = single_scalar(0.5);
    Adam adam(store, 0.9, 0.98, 1e-9);
    sum_squares(store.get("x")).backward();  // g = 2x = 1
    adam.step(store, 0.01);
    EXPECT_NEAR(store.get("x").data()[0], 0.5 - 0.01 / (1.0 + 1e-9), 1e-15);
}

// Closed-form bias-corrected moments over a varying gradient sequence.
TEST(AdamOptimizer, MatchesHandRolledRecurrence) {
    ParamStore store = single_scalar(1.3);
    Adam adam(store, 0.9, 0.98, 1e-9);
    double x = 1.3;
    double m = 0.0;
    double v = 0.0;
    for (int t = 1; t <= 20; ++t) {
        store.zero_grad();
        sum_squares(store.get("x")).backward();
        const double g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.98 * v + 0.02 * g * g;
        x -= 0.05 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.98, t))) + 1e-9);
        adam.step(store, 0.05);
        ASSERT_NEAR(store.get("x").data()[0], x, 1e-14) << "t=" << t;
    }
}

TEST(AdamOptimizer, MissingGradientStillDecaysMoments) {
    ParamStore store = single_scalar(0.5);
    Adam adam(store, 0.9, 0.98, 1e-9);
    sum_squares(store.get("x")).backward();
    adam.step(store, 0.01);
    store.zero_grad();
    const double before = store.get("x").data()[0];
    adam.step(store, 0.01);  // zero gradient, nonzero first moment
    const double m = 0.9 * 0.1;
    const double v = 0.98 * 0.02;
    const double expected = before - 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.98 * 0.98)) + 1e-9);
    EXPECT_NEAR(store.get("x").data()[0], expected, 1e-15);
}

TEST(AdamOptimizer, Deterministic) {
    auto run = [] {
        SlimmableModel m = teacher_model(4);
        Adam adam(m.params(), 0.9, 0.98, 1e-9);
        const Batch b = make_batch(data(2));
        cross_entropy(m.forward(b, m.largest()).logits, b.labels).backward();
        adam.step(m.params(), 1e-3);
        return m.params().checksum();
    };
    EXPECT_EQ(run(), run());
}

// ==================== KD losses ====================

TEST(KdLoss, KlClosedForms) {
    const Tensor teacher = Tensor::from({1, 2}, {0.0, -1e3});  // softmax [1, 0]
    const Tensor student = Tensor::from({1, 2}, {0.0, 0.0}, true);
    EXPECT_NEAR(kd_loss(teacher, student, KdKind::KlSoftmax).item(), std::log(2.0), 1e-12);
    Rng rng(2);
    const Tensor same = dst::testing::random_tensor(rng, {3, 8});
    EXPECT_NEAR(kd_loss(same, same, KdKind::KlSoftmax).item(), 0.0, 1e-15);
}

TEST(KdLoss, BceClosedForm) {
    const Tensor teacher = Tensor::zeros({2, 8});
    const Tensor student = Tensor::zeros({2, 8}, true);
    EXPECT_NEAR(kd_loss(teacher, student, KdKind::BceSigmoid).item(), std::log(2.0), 1e-12);
}

TEST(KdLoss, TeacherReceivesNoGradient) {
    Rng rng(3);
    for (KdKind kind : {KdKind::KlSoftmax, KdKind::BceSigmoid}) {
        Tensor teacher = dst::testing::random_tensor(rng, {2, 8}, 1.0, true);
        Tensor student = dst::testing::random_tensor(rng, {2, 8}, 1.0, true);
        kd_loss(teacher, student, kind).backward();
        EXPECT_FALSE(teacher.has_grad() && std::ranges::any_of(teacher.grad(), [](double g) { return g != 0.0; }));
        EXPECT_TRUE(student.has_grad());
    }
}

// ==================== Sampling ====================

TEST(SampleArchitectures, SandwichWithKEqualsFour) {
    const SlimmableModel m = SlimmableModel::create(small_config(), 1);
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::vector<ArchDescriptor> omega = sample_architectures(m.selected(), 4, rng);
        ASSERT_EQ(omega.size(), 4u);
        EXPECT_EQ(omega[0], m.smallest());
        EXPECT_EQ(omega[1], m.largest());
        std::set<std::string> labels;
        for (const ArchDescriptor& a : omega) {
            EXPECT_TRUE(m.is_selected(a));
            labels.insert(a.label());
        }
        EXPECT_EQ(labels.size(), 4u);
    }
}

TEST(SampleArchitectures, KEqualsTwoConsumesNoRandomness) {
    const SlimmableModel m = SlimmableModel::create(small_config(), 1);
    Rng rng(6);
    Rng untouched(6);
    const std::vector<ArchDescriptor> omega = sample_architectures(m.selected(), 2, rng);
    EXPECT_EQ(omega, (std::vector<ArchDescriptor>{m.smallest(), m.largest()}));
    EXPECT_EQ(rng.next_u64(), untouched.next_u64());
}

TEST(SampleArchitectures, DeterministicAndRejectsBadK) {
    const SlimmableModel m = SlimmableModel::create(small_config(), 1);
    Rng a(7);
    Rng b(7);
    EXPECT_EQ(sample_architectures(m.selected(), 5, a), sample_architectures(m.selected(), 5, b));
    EXPECT_THROW(sample_architectures(m.selected(), 1, a), std::invalid_argument);
    EXPECT_THROW(sample_architectures(m.selected(), 11, a), std::invalid_argument);
}

// Each middle arch is drawn with probability 2/8 at k=4.
TEST(SampleArchitectures, MiddleDrawsAreUniform) {
    const SlimmableModel m = SlimmableModel::create(small_config(), 1);
    Rng rng(8);
    std::map<std::string, int> counts;
    for (int t = 0; t < 4000; ++t) {
        const std::vector<ArchDescriptor> omega = sample_architectures(m.selected(), 4, rng);
        ++counts[omega[2].label()];
        ++counts[omega[3].label()];
    }
    EXPECT_EQ(counts.size(), 8u);
    for (const auto& [label, n] : counts) {
        EXPECT_GE(n, 880) << label;
        EXPECT_LE(n, 1120) << label;
    }
}

// ==================== Initialization ====================

TEST(InitDst, TeacherCopyIsBitwiseAndIndependent) {
    const SlimmableModel teacher = teacher_model();
    const std::uint64_t sum = teacher.params().checksum();
    SlimmableModel student = init_dst(teacher, InitMode::Teacher, 9);
    EXPECT_EQ(teacher.params().checksum(), sum);
    const Batch b = make_batch(data(3));
    EXPECT_TRUE(bitwise_equal(student.forward(b, student.largest()).logits,
                              teacher.forward(b, teacher.largest()).logits));
    student.params().get("cls.b").mutable_data()[0] += 1.0;
    EXPECT_EQ(teacher.params().checksum(), sum);
}

TEST(InitDst, RandomModeIsReproducibleAndFresh) {
    const SlimmableModel teacher = teacher_model();
    const SlimmableModel a = init_dst(teacher, InitMode::Random, 9);
    const SlimmableModel b = init_dst(teacher, InitMode::Random, 9);
    const SlimmableModel c = init_dst(teacher, InitMode::Random, 10);
    EXPECT_EQ(a.params().checksum(), b.params().checksum());
    EXPECT_NE(a.params().checksum(), c.params().checksum());
    EXPECT_NE(a.params().checksum(), teacher.params().checksum());
    EXPECT_EQ(a.layer_scores(), teacher.layer_scores());
    const Tensor& proj = a.params().get("emb.proj");
    EXPECT_NE(proj.at(0, 0), 1.0);
    EXPECT_NE(proj.at(0, 1), 0.0);
}

// ==================== DST steps ====================

TEST(DstStep, TeacherInitFixedPointHasZeroLossAndGradient) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Teacher, 1);
    const Batch b = make_batch(data(4));
    const std::vector<ArchDescriptor> omega{student.largest()};
    const std::vector<ArchLoss> losses = accumulate_dst_gradients(student, teacher, b, omega, quick_config());
    ASSERT_EQ(losses.size(), 1u);
    EXPECT_NEAR(losses[0].loss, 0.0, 1e-14);
    for (const auto& [name, g] : grads_of(student.params())) {
        for (double x : g) {
            ASSERT_NEAR(x, 0.0, 1e-12) << name;
        }
    }
}

TEST(DstStep, RejectsBrokenOmega) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Teacher, 1);
    const Batch b = make_batch(data(2));
    const std::vector<ArchDescriptor> no_large{student.smallest(), student.selected()[3]};
    const std::vector<ArchDescriptor> dup{student.smallest(), student.largest(), student.largest()};
    const std::vector<ArchDescriptor> foreign{student.smallest(), student.largest(), student.grid().at(3, 0)};
    for (const auto& omega : {no_large, dup, foreign}) {
        EXPECT_THROW(accumulate_dst_gradients(student, teacher, b, omega, quick_config()), std::invalid_argument);
    }
}

// Gradient support equals the union of what each arch in Omega supports on
// its own, and each arch's support stays inside the slices it reads.
TEST(DstStep, GradientSupportIsUnionOfSlices) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Random, 2);
    jitter_params(student, 3);
    const Batch b = make_batch(data(4));
    const SlimmableModel& s = student;
    const std::vector<ArchDescriptor> omega{s.smallest(), s.largest(), s.find_arch(Ratio::make(1, 2), Ratio::make(1, 3))};

    using Block = std::map<std::string, std::pair<std::size_t, std::size_t>>;
    auto observe = [&](Block& block) {
        return [&](const Tensor& src, std::size_t rows, std::size_t cols) {
            if (const ParamEntry* e = s.params().find(src)) {
                auto& [r, c] = block[e->name];
                r = std::max(r, rows);
                c = std::max(c, cols);
            }
        };
    };
    auto inside = [&](const Block& block, const ParamEntry& e, std::size_t i) {
        const auto it = block.find(e.name);
        if (it == block.end()) {
            return false;
        }
        if (e.value.dim() == 1) {
            return i < it->second.first;
        }
        return i / e.value.cols() < it->second.first && i % e.value.cols() < it->second.second;
    };

    // Biases that shift every softmax logit of a row equally have an
    // analytically zero gradient; only rounding residue lands there.
    auto shift_invariant = [](const std::string& name) {
        return name.ends_with(".bk") || (name.starts_with("red.") && name.ends_with(".b2"));
    };

    // Per-arch passes, each checked against its own slices.
    std::map<std::string, std::vector<bool>> union_support;
    for (const ParamEntry& e : s.params().entries()) {
        union_support[e.name].assign(e.value.numel(), false);
    }
    Tensor target;
    {
        NoGradGuard no_grad;
        target = teacher.forward(b, teacher.largest()).logits;
    }
    for (const ArchDescriptor& a : omega) {
        student.params().zero_grad();
        Block block;
        {
            SliceObserverScope scope(observe(block));
            kl_softmax(target, student.forward(b, a).logits).backward();
        }
        for (const ParamEntry& e : s.params().entries()) {
            if (shift_invariant(e.name)) {
                continue;
            }
            bool any = false;
            for (std::size_t i = 0; i < e.value.numel(); ++i) {
                const double g = e.value.has_grad() ? e.value.grad()[i] : 0.0;
                if (g != 0.0) {
                    ASSERT_TRUE(inside(block, e, i)) << a.label() << " " << e.name << "[" << i << "]";
                    union_support[e.name][i] = true;
                    any = true;
                }
            }
            EXPECT_EQ(any, block.contains(e.name)) << a.label() << " " << e.name;
        }
    }

    student.params().zero_grad();
    accumulate_dst_gradients(student, teacher, b, omega, quick_config());
    for (const ParamEntry& e : s.params().entries()) {
        if (shift_invariant(e.name)) {
            continue;
        }
        for (std::size_t i = 0; i < e.value.numel(); ++i) {
            const double g = e.value.has_grad() ? e.value.grad()[i] : 0.0;
            ASSERT_EQ(g != 0.0, union_support[e.name][i]) << e.name << "[" << i << "]";
        }
    }
}

TEST(DstStep, FusedAccumulationEqualsSumOfSingleArchPasses) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Random, 4);
    const Batch b = make_batch(data(4));
    Rng rng(5);
    const std::vector<ArchDescriptor> omega = sample_architectures(student.selected(), 4, rng);
    const TrainConfig cfg = quick_config();

    std::map<std::string, std::vector<double>> summed = grads_of(student.params());
    for (auto& [name, g] : summed) {
        std::ranges::fill(g, 0.0);
    }
    // Oracle: one independent forward/backward per arch against the detached teacher.
    Tensor target;
    {
        NoGradGuard no_grad;
        target = teacher.forward(b, teacher.largest()).logits;
    }
    for (const ArchDescriptor& a : omega) {
        student.params().zero_grad();
        kl_softmax(target, student.forward(b, a).logits).backward();
        for (const auto& [name, g] : grads_of(student.params())) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                summed[name][i] += g[i];
            }
        }
    }
    student.params().zero_grad();
    accumulate_dst_gradients(student, teacher, b, omega, cfg);
    for (const auto& [name, g] : grads_of(student.params())) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            ASSERT_NEAR(g[i], summed[name][i], 1e-12) << name << "[" << i << "]";
        }
    }
}

TEST(DstStep, ExactlyOneUpdatePerStep) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Random, 6);
    Adam adam(student.params(), 0.9, 0.98, 1e-9);
    const Batch b = make_batch(data(4));
    Rng rng(7);
    for (std::size_t k : {2, 4, 10}) {
        const std::size_t before = adam.steps();
        const StepLog log =
            dst_train_step(student, teacher, b, sample_architectures(student.selected(), k, rng), quick_config(), adam, 1e-3);
        EXPECT_EQ(log.updates, 1u);
        EXPECT_EQ(log.losses.size(), k);
        EXPECT_EQ(adam.steps(), before + 1);
    }
}

TEST(DstStep, InplaceAndGroundTruthStrategies) {
    const SlimmableModel teacher = teacher_model();
    const Batch b = make_batch(data(4));
    TrainConfig cfg = quick_config();
    const SlimmableModel reference = init_dst(teacher, InitMode::Teacher, 1);
    const std::vector<ArchDescriptor> omega{reference.smallest(), reference.largest()};
    const double ce_large = cross_entropy(reference.forward(b, reference.largest()).logits, b.labels).item();
    const double ce_small = cross_entropy(reference.forward(b, reference.smallest()).logits, b.labels).item();
    const double kd_small = kd_loss(reference.forward(b, reference.largest()).logits,
                                    reference.forward(b, reference.smallest()).logits, KdKind::KlSoftmax)
                                .item();

    cfg.strategy = Strategy::InplaceDistill;
    SlimmableModel s1 = init_dst(teacher, InitMode::Teacher, 1);
    const std::vector<ArchLoss> inplace = accumulate_dst_gradients(s1, teacher, b, omega, cfg);
    EXPECT_EQ(inplace[1].loss, ce_large);
    EXPECT_EQ(inplace[0].loss, kd_small);

    cfg.strategy = Strategy::GroundTruth;
    SlimmableModel s2 = init_dst(teacher, InitMode::Teacher, 1);
    const std::vector<ArchLoss> gt = accumulate_dst_gradients(s2, teacher, b, omega, cfg);
    EXPECT_EQ(gt[0].loss, ce_small);
    EXPECT_EQ(gt[1].loss, ce_large);
}

// ==================== Training loops ====================

TEST(Training, TeacherRunIsDeterministic) {
    const std::vector<synth::Sample> d = data(32);
    auto run = [&] {
        SlimmableModel m = SlimmableModel::create(small_config(), 3);
        const TrainReport r = train_teacher(m, d, quick_config(5));
        return std::pair{m.params().checksum(), r.final_loss};
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.second), std::bit_cast<std::uint64_t>(b.second));
}

TEST(Training, DstRunKeepsTeacherFrozenAndLogsSandwich) {
    const SlimmableModel teacher = teacher_model();
    const std::uint64_t sum = teacher.params().checksum();
    const std::vector<synth::Sample> d = data(40);
    auto run = [&](std::vector<StepLog>* logs) {
        SlimmableModel student = init_dst(teacher, InitMode::Teacher, 1);
        const TrainReport r = train_dst(student, teacher, d, quick_config(6), [&](const StepLog& l) {
            if (logs) {
                logs->push_back(l);
            }
        });
        EXPECT_EQ(r.updates, 6u);
        return student.params().checksum();
    };
    std::vector<StepLog> logs;
    const std::uint64_t first = run(&logs);
    EXPECT_EQ(first, run(nullptr));
    EXPECT_EQ(teacher.params().checksum(), sum);
    ASSERT_EQ(logs.size(), 6u);
    for (std::size_t i = 0; i < logs.size(); ++i) {
        EXPECT_EQ(logs[i].step, i + 1);
        EXPECT_EQ(logs[i].updates, 1u);
        ASSERT_EQ(logs[i].losses.size(), 4u);
        EXPECT_EQ(logs[i].losses[0].arch, teacher.smallest().label());
        EXPECT_EQ(logs[i].losses[1].arch, teacher.largest().label());
    }
    EXPECT_NEAR(logs[0].losses[1].loss, 0.0, 1e-14);  // (D,L) starts at the teacher
}

TEST(Training, LargestLossStaysNearZeroEarlyOn) {
    const SlimmableModel teacher = teacher_model();
    SlimmableModel student = init_dst(teacher, InitMode::Teacher, 1);
    const std::vector<synth::Sample> d = data(64);
    TrainConfig cfg = quick_config(100);
    cfg.epochs = 100;
    cfg.base_lr = 1e-4;
    cfg.batch_size = 16;
    double first = -1.0;
    double worst = 0.0;
    train_dst(student, teacher, d, cfg, [&](const StepLog& l) {
        if (first < 0.0) {
            first = l.losses[1].loss;
        }
        worst = std::max(worst, l.losses[1].loss);
    });
    EXPECT_NEAR(first, 0.0, 1e-14);
    EXPECT_LT(worst, 0.05);
}

TEST(Training, StepLogIsOneJsonObjectPerLine) {
    StepLog log;
    log.step = 3;
    log.epoch = 1;
    log.lr = 2.5e-4;
    log.losses = {{"(1/4D,1/6L)", 0.5}, {"(D,L)", 0.25}};
    log.updates = 1;
    std::ostringstream out;
    write_step_log(out, log);
    const std::string line = out.str();
    ASSERT_EQ(std::ranges::count(line, '\n'), 1);
    const nlohmann::json j = nlohmann::json::parse(line);
    EXPECT_EQ(j["step"], 3);
    EXPECT_EQ(j["lr"], 2.5e-4);
    EXPECT_EQ(j["omega"][1], "(D,L)");
    EXPECT_EQ(j["losses"][0]["loss"], 0.5);
    EXPECT_EQ(j["updates"], 1);
}

// ==================== Evaluation ====================

TEST(Evaluation, ArgmaxTiesGoToFirstIndex) {
    const Tensor logits = Tensor::from({3, 3}, {1, 1, 0, 0, 2, 2, -1, -3, -1});
    EXPECT_EQ(argmax_rows(logits), (std::vector<int>{0, 1, 0}));
}

TEST(Evaluation, ConstantPredictorScoresItsClassFrequency) {
    SlimmableModel m = SlimmableModel::create(small_config(), 1);
    m.params().get("cls.b").mutable_data()[5] = 1e6;
    const std::vector<synth::Sample> d = data(300);
    const double freq =
        static_cast<double>(std::ranges::count_if(d, [](const synth::Sample& s) { return s.answer == 5; })) / 300.0;
    EXPECT_EQ(evaluate_accuracy(m, m.largest(), d, 64), freq);
    EXPECT_THROW(evaluate_accuracy(m, m.largest(), {}), std::invalid_argument);
}
