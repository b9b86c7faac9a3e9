#include <charconv>
#include <fstream>
#include <map>
#include <ostream>

#include "dst/harness.hpp"

namespace dst {

// ==================== Evaluation & export ====================

double evaluate(const SlimmableModel& model, const ArchDescriptor& arch, std::span<const synth::Sample> data) {
    if (!model.is_selected(arch)) {
        throw std::invalid_argument("evaluate: " + arch.label() + " is not a selected architecture");
    }
    return evaluate_accuracy(model, arch, data);
}

SlimmableModel export_submodel(const SlimmableModel& model, const ArchDescriptor& arch,
                               const std::filesystem::path& path) {
    SlimmableModel sub = model.export_submodel(arch);
    save_checkpoint(path, sub);
    return sub;
}

std::vector<AttentionMap> capture_attention(const SlimmableModel& model, const ArchDescriptor& arch,
                                            const synth::Sample& sample) {
    NoGradGuard no_grad;
    std::vector<AttentionMap> maps;
    ForwardOptions options;
    options.attention = &maps;
    options.capture_sample = 0;
    model.forward(make_batch(std::span<const synth::Sample>(&sample, 1)), arch, options);
    return maps;
}

void write_attention_json(std::ostream& out, const ArchDescriptor& arch, std::span<const AttentionMap> maps) {
    nlohmann::ordered_json j;
    j["arch"] = arch.label();
    j["width"] = arch.width;
    j["depth"] = arch.depth;
    j["kept_layers"] = arch.kept_layers;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const AttentionMap& m : maps) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < m.rows; ++r) {
            rows.push_back(std::vector<double>(m.probs.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                                               m.probs.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols)));
        }
        list.push_back({{"stack", m.stack},
                        {"layer", m.layer},
                        {"kind", m.kind},
                        {"head", m.head},
                        {"rows", m.rows},
                        {"cols", m.cols},
                        {"probs", std::move(rows)}});
    }
    j["maps"] = std::move(list);
    out << j.dump(1) << '\n';
}

// ==================== Sweeps ====================

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<MetricsRow> run_sweep(const SlimmableModel& model, std::span<const synth::Sample> data,
                                  const std::string& split, std::uint64_t seed) {
    std::vector<MetricsRow> rows;
    for (const CostReport& c : cost_table(model.config(), model.selected())) {
        MetricsRow r;
        r.width_ratio = c.arch.width_ratio;
        r.depth_ratio = c.arch.depth_ratio;
        r.width = c.arch.width;
        r.depth = c.arch.depth;
        r.kept_layers = c.arch.kept_layers_str();
        r.accuracy = evaluate(model, c.arch, data);
        r.total_params = c.total_params();
        r.backbone_params = c.backbone_params();
        r.flops = c.total_flops();
        r.split = split;
        r.seed = seed;
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

void write_metrics_fields(std::ostream& out, const MetricsRow& r) {
    out << r.width_ratio.str() << ',' << r.depth_ratio.str() << ',' << r.width << ',' << r.depth << ','
        << r.kept_layers << ',' << format_double(r.accuracy) << ',' << r.total_params << ',' << r.backbone_params
        << ',' << r.flops << ',' << r.split << ',' << r.seed;
}

constexpr const char* kMetricsHeader =
    "width_ratio,depth_ratio,width,depth,kept_layers,accuracy,total_params,backbone_params,flops,split,seed";

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
    out << kMetricsHeader << '\n';
    for (const MetricsRow& r : rows) {
        write_metrics_fields(out, r);
        out << '\n';
    }
}

// ==================== Ablations ====================

SlimmableModel with_depth_strategy(const SlimmableModel& model, DepthStrategy strategy, std::uint64_t seed) {
    ModelConfig config = model.config();
    config.depth_strategy = strategy;
    Rng rng(mix_seed(seed, 0x64657074ull));
    std::vector<double> scores = depth_scores(strategy, config.layers, rng);
    return SlimmableModel(config, model.params().clone(), std::move(scores));
}

std::vector<AblationRow> run_ablation(const SlimmableModel& teacher, std::span<const synth::Sample> train,
                                      std::span<const synth::Sample> val, const TrainConfig& config,
                                      const AblationPlan& plan) {
    std::map<std::pair<DepthStrategy, Strategy>, std::vector<MetricsRow>> cache;
    auto run = [&](DepthStrategy depth, Strategy strategy) -> const std::vector<MetricsRow>& {
        const auto key = std::make_pair(depth, strategy);
        if (auto it = cache.find(key); it != cache.end()) {
            return it->second;
        }
        TrainConfig cfg = config;
        cfg.strategy = strategy;
        SlimmableModel student = with_depth_strategy(init_dst(teacher, cfg.init, cfg.seed), depth, cfg.seed);
        train_dst(student, teacher, train, cfg);
        return cache.emplace(key, run_sweep(student, val, "val", cfg.seed)).first->second;
    };

    std::vector<AblationRow> out;
    for (DepthStrategy d : plan.depth_strategies) {
        for (const MetricsRow& m : run(d, Strategy::KdFixedTeacher)) {
            out.push_back({"depth_strategy", depth_strategy_name(d), m});
        }
    }
    for (Strategy s : plan.training_strategies) {
        for (const MetricsRow& m : run(DepthStrategy::SlimMiddle, s)) {
            out.push_back({"training_strategy", strategy_name(s), m});
        }
    }
    return out;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
    out << "study,setting," << kMetricsHeader << '\n';
    for (const AblationRow& r : rows) {
        out << r.study << ',' << r.setting << ',';
        write_metrics_fields(out, r.metrics);
        out << '\n';
    }
}

}  // namespace dst
