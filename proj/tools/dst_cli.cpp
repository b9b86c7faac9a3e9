#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "dst/harness.hpp"

using namespace dst;

namespace {

// ==================== Shared options ====================

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> data_seed;
    std::optional<std::size_t> train_size;
    std::optional<std::size_t> val_size;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_path, "JSON run config (model, teacher, dst, data sections)");
    app->add_option("--seed", c.seed, "Seed for initialization and training streams");
    app->add_option("--data-seed", c.data_seed, "Seed of the synthetic dataset");
    app->add_option("--train-size", c.train_size, "Training samples");
    app->add_option("--val-size", c.val_size, "Evaluation samples");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? RunConfig::toy() : load_run_config(c.config_path);
    if (c.seed) {
        cfg.teacher.seed = *c.seed;
        cfg.dst.seed = *c.seed;
    }
    if (c.data_seed) {
        cfg.data.seed = *c.data_seed;
    }
    if (c.train_size) {
        cfg.data.train_size = *c.train_size;
    }
    if (c.val_size) {
        cfg.data.val_size = *c.val_size;
    }
    return cfg;
}

struct TrainOverrides {
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> lr;
    std::optional<std::size_t> max_steps;
};

void add_train_overrides(CLI::App* app, TrainOverrides& t) {
    app->add_option("--epochs", t.epochs, "Training epochs");
    app->add_option("--batch-size", t.batch_size, "Samples per step");
    app->add_option("--lr", t.lr, "Base learning rate");
    app->add_option("--max-steps", t.max_steps, "Stop after this many updates (0 = no limit)");
}

void apply(const TrainOverrides& t, TrainConfig& c) {
    if (t.epochs) {
        c.epochs = *t.epochs;
    }
    if (t.batch_size) {
        c.batch_size = *t.batch_size;
    }
    if (t.lr) {
        c.base_lr = *t.lr;
    }
    if (t.max_steps) {
        c.max_steps = *t.max_steps;
    }
    c.validate();
}

struct ArchChoice {
    std::string width = "1";
    std::string depth = "1";
};

void add_arch(CLI::App* app, ArchChoice& a) {
    app->add_option("--width-ratio", a.width, "Width ratio, e.g. 1/4")->capture_default_str();
    app->add_option("--depth-ratio", a.depth, "Depth ratio, e.g. 1/3")->capture_default_str();
}

const ArchDescriptor& pick(const SlimmableModel& model, const ArchChoice& a) {
    return model.find_arch(Ratio::parse(a.width), Ratio::parse(a.depth));
}

synth::Split parse_split(const std::string& s) {
    if (s == "train") {
        return synth::Split::Train;
    }
    if (s == "val") {
        return synth::Split::Val;
    }
    if (s == "test") {
        return synth::Split::Test;
    }
    throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<synth::Sample> eval_data(const RunConfig& cfg, const std::string& split) {
    const synth::Split s = parse_split(split);
    return synth::generate_dataset(cfg.data.seed, s == synth::Split::Train ? cfg.data.train_size : cfg.data.val_size,
                                   s);
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& fn) {
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write '" + path + "'");
    }
    fn(out);
}

std::unique_ptr<std::ofstream> open_log(const std::string& path) {
    if (path.empty()) {
        return nullptr;
    }
    auto out = std::make_unique<std::ofstream>(path);
    if (!*out) {
        throw std::runtime_error("cannot write log '" + path + "'");
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Width- and depth-slimmable Transformer: training, slicing, and cost analysis"};
    app.require_subcommand(1);

    // ==================== train-teacher ====================
    Common tt_common;
    TrainOverrides tt_train;
    std::string tt_out = "teacher.dst";
    std::string tt_log;
    CLI::App* tt = app.add_subcommand("train-teacher", "Train the full architecture on labels");
    add_common(tt, tt_common);
    add_train_overrides(tt, tt_train);
    tt->add_option("--out", tt_out, "Checkpoint path")->capture_default_str();
    tt->add_option("--log", tt_log, "Per-step JSON lines log");
    tt->callback([&] {
        RunConfig cfg = resolve(tt_common);
        apply(tt_train, cfg.teacher);
        const auto train = synth::generate_dataset(cfg.data.seed, cfg.data.train_size, synth::Split::Train);
        const auto val = synth::generate_dataset(cfg.data.seed, cfg.data.val_size, synth::Split::Val);
        SlimmableModel model = SlimmableModel::create(cfg.model, cfg.teacher.seed);
        auto log = open_log(tt_log);
        const auto t0 = std::chrono::steady_clock::now();
        const TrainReport report = train_teacher(model, train, cfg.teacher, [&](const StepLog& s) {
            if (log) {
                write_step_log(*log, s);
            }
        });
        save_checkpoint(tt_out, model);
        std::cout << "steps " << report.steps << ", final loss " << format_double(report.final_loss) << ", val accuracy "
                  << format_double(evaluate(model, model.largest(), val)) << ", " << seconds_since(t0) << " s\n";
    });

    // ==================== train-dst ====================
    Common td_common;
    TrainOverrides td_train;
    std::string td_teacher = "teacher.dst";
    std::string td_out = "dst.dst";
    std::string td_log;
    std::optional<std::size_t> td_k;
    std::optional<std::string> td_strategy;
    std::optional<std::string> td_init;
    std::optional<std::string> td_kd;
    std::optional<std::string> td_depth;
    bool td_all = false;
    CLI::App* td = app.add_subcommand("train-dst", "Self-distill every selected submodel from a frozen teacher");
    add_common(td, td_common);
    add_train_overrides(td, td_train);
    td->add_option("--teacher", td_teacher, "Teacher checkpoint")->capture_default_str();
    td->add_option("--out", td_out, "Checkpoint path")->capture_default_str();
    td->add_option("--log", td_log, "Per-step JSON lines log");
    td->add_option("--k", td_k, "Architectures per step");
    td->add_option("--strategy", td_strategy, "kd_fixed_teacher | inplace_distill | ground_truth");
    td->add_option("--init", td_init, "teacher | random");
    td->add_option("--kd", td_kd, "kl-softmax | bce-sigmoid");
    td->add_option("--depth-strategy", td_depth, "slim-middle | slim-first | slim-last | slim-random");
    td->add_flag("--all-archs", td_all, "Train every grid architecture instead of the triangle");
    td->callback([&] {
        RunConfig cfg = resolve(td_common);
        apply(td_train, cfg.dst);
        if (td_k) {
            cfg.dst.k = *td_k;
        }
        if (td_strategy) {
            cfg.dst.strategy = parse_strategy(*td_strategy);
        }
        if (td_init) {
            cfg.dst.init = parse_init_mode(*td_init);
        }
        if (td_kd) {
            cfg.dst.kd_kind = parse_kd_kind(*td_kd);
        }
        const SlimmableModel teacher = load_checkpoint(td_teacher);
        SlimmableModel student = init_dst(teacher, cfg.dst.init, cfg.dst.seed);
        if (td_depth) {
            student = with_depth_strategy(student, parse_depth_strategy(*td_depth), cfg.dst.seed);
        }
        if (td_all) {
            ModelConfig c = student.config();
            c.triangle = false;
            student = SlimmableModel(c, student.params().clone(), student.layer_scores());
        }
        const auto train = synth::generate_dataset(cfg.data.seed, cfg.data.train_size, synth::Split::Train);
        auto log = open_log(td_log);
        const auto t0 = std::chrono::steady_clock::now();
        const TrainReport report = train_dst(student, teacher, train, cfg.dst, [&](const StepLog& s) {
            if (log) {
                write_step_log(*log, s);
            }
        });
        save_checkpoint(td_out, student);
        std::cout << "steps " << report.steps << ", updates " << report.updates << ", final loss "
                  << format_double(report.final_loss) << ", " << seconds_since(t0) << " s\n";
    });

    // ==================== eval ====================
    Common ev_common;
    ArchChoice ev_arch;
    std::string ev_ckpt = "dst.dst";
    std::string ev_split = "val";
    CLI::App* ev = app.add_subcommand("eval", "Accuracy of one submodel");
    add_common(ev, ev_common);
    add_arch(ev, ev_arch);
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->capture_default_str();
    ev->add_option("--split", ev_split, "train | val | test")->capture_default_str();
    ev->callback([&] {
        const RunConfig cfg = resolve(ev_common);
        const SlimmableModel model = load_checkpoint(ev_ckpt);
        const ArchDescriptor& arch = pick(model, ev_arch);
        std::cout << arch.label() << " accuracy " << format_double(evaluate(model, arch, eval_data(cfg, ev_split)))
                  << '\n';
    });

    // ==================== export ====================
    ArchChoice ex_arch;
    std::string ex_ckpt = "dst.dst";
    std::string ex_out = "submodel.dst";
    CLI::App* ex = app.add_subcommand("export", "Write a standalone submodel checkpoint");
    Common ex_common;
    add_common(ex, ex_common);
    add_arch(ex, ex_arch);
    ex->add_option("--checkpoint", ex_ckpt, "Checkpoint")->capture_default_str();
    ex->add_option("--out", ex_out, "Output checkpoint")->capture_default_str();
    ex->callback([&] {
        const SlimmableModel model = load_checkpoint(ex_ckpt);
        const ArchDescriptor& arch = pick(model, ex_arch);
        const SlimmableModel sub = export_submodel(model, arch, ex_out);
        std::cout << "exported " << arch.label() << " with " << sub.params().scalar_count() << " parameters to "
                  << ex_out << '\n';
    });

    // ==================== analyze-cost ====================
    Common ac_common;
    std::string ac_ckpt;
    std::string ac_out;
    std::size_t ac_m = 0;
    std::size_t ac_n = 0;
    bool ac_all = false;
    CLI::App* ac = app.add_subcommand("analyze-cost", "Parameter and FLOPs table per architecture");
    add_common(ac, ac_common);
    ac->add_option("--checkpoint", ac_ckpt, "Take the model config from a checkpoint");
    ac->add_option("--m", ac_m, "Question length (default: config)");
    ac->add_option("--n", ac_n, "Region count (default: config)");
    ac->add_option("--out", ac_out, "CSV path (default: stdout)");
    ac->add_flag("--all-archs", ac_all, "Include architectures outside the triangle");
    ac->callback([&] {
        ModelConfig c = ac_ckpt.empty() ? resolve(ac_common).model
                                        : model_config_from_json(read_manifest(ac_ckpt).at("config"));
        c.validate();
        Rng rng(mix_seed(resolve(ac_common).teacher.seed, 0x64657074ull));
        const std::vector<double> scores = depth_scores(c.depth_strategy, c.layers, rng);
        const ArchGrid grid = build_grid(c.width_grid(), c.depth_grid(), c.heads, scores);
        const std::vector<ArchDescriptor> archs = (c.triangle && !ac_all) ? triangle_select(grid) : select_all(grid);
        const std::vector<CostReport> rows = cost_table(c, archs, ac_m, ac_n);
        emit(ac_out, [&](std::ostream& out) { write_cost_csv(out, rows); });
    });

    // ==================== sweep ====================
    Common sw_common;
    std::string sw_ckpt = "dst.dst";
    std::string sw_out;
    std::string sw_split = "val";
    CLI::App* sw = app.add_subcommand("sweep", "Accuracy and cost of every selected submodel");
    add_common(sw, sw_common);
    sw->add_option("--checkpoint", sw_ckpt, "Checkpoint")->capture_default_str();
    sw->add_option("--split", sw_split, "train | val | test")->capture_default_str();
    sw->add_option("--out", sw_out, "CSV path (default: stdout)");
    sw->callback([&] {
        const RunConfig cfg = resolve(sw_common);
        const SlimmableModel model = load_checkpoint(sw_ckpt);
        const std::vector<MetricsRow> rows = run_sweep(model, eval_data(cfg, sw_split), sw_split, cfg.data.seed);
        emit(sw_out, [&](std::ostream& out) { write_metrics_csv(out, rows); });
    });

    // ==================== attn-dump ====================
    Common ad_common;
    ArchChoice ad_arch;
    std::string ad_ckpt = "dst.dst";
    std::string ad_out;
    std::string ad_split = "val";
    std::uint64_t ad_index = 0;
    CLI::App* ad = app.add_subcommand("attn-dump", "Attention maps of one sample as JSON");
    add_common(ad, ad_common);
    add_arch(ad, ad_arch);
    ad->add_option("--checkpoint", ad_ckpt, "Checkpoint")->capture_default_str();
    ad->add_option("--split", ad_split, "train | val | test")->capture_default_str();
    ad->add_option("--sample-index", ad_index, "Index within the split")->capture_default_str();
    ad->add_option("--out", ad_out, "JSON path (default: stdout)");
    ad->callback([&] {
        const RunConfig cfg = resolve(ad_common);
        const SlimmableModel model = load_checkpoint(ad_ckpt);
        const ArchDescriptor& arch = pick(model, ad_arch);
        const synth::Sample sample =
            synth::generate_sample(cfg.data.seed, synth::split_base(parse_split(ad_split)) + ad_index);
        const std::vector<AttentionMap> maps = capture_attention(model, arch, sample);
        emit(ad_out, [&](std::ostream& out) { write_attention_json(out, arch, maps); });
    });

    // ==================== ablate ====================
    Common ab_common;
    TrainOverrides ab_train;
    std::string ab_teacher = "teacher.dst";
    std::string ab_out;
    CLI::App* ab = app.add_subcommand("ablate", "Depth-strategy and training-strategy comparison CSV");
    add_common(ab, ab_common);
    add_train_overrides(ab, ab_train);
    ab->add_option("--teacher", ab_teacher, "Teacher checkpoint")->capture_default_str();
    ab->add_option("--out", ab_out, "CSV path (default: stdout)");
    ab->callback([&] {
        RunConfig cfg = resolve(ab_common);
        apply(ab_train, cfg.dst);
        const SlimmableModel teacher = load_checkpoint(ab_teacher);
        const auto train = synth::generate_dataset(cfg.data.seed, cfg.data.train_size, synth::Split::Train);
        const auto val = synth::generate_dataset(cfg.data.seed, cfg.data.val_size, synth::Split::Val);
        const std::vector<AblationRow> rows = run_ablation(teacher, train, val, cfg.dst);
        emit(ab_out, [&](std::ostream& out) { write_ablation_csv(out, rows); });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
