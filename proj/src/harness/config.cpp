#include <fstream>
#include <set>
#include <stdexcept>

#include "dst/harness.hpp"

namespace dst {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads optional fields and rejects keys nobody asked for.
class FieldReader {
public:
    FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw std::invalid_argument(where_ + ": expected a JSON object");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (const auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->get<T>();
            } catch (const json::exception& e) {
                throw std::invalid_argument(where_ + "." + key + ": " + e.what());
            }
        }
    }

    template <typename T, typename Parse>
    void read_as(const char* key, T& out, Parse parse) {
        std::string text;
        bool present = j_.contains(key);
        read(key, text);
        if (present) {
            out = parse(text);
        }
    }

    void read_ratios(const char* key, std::vector<Ratio>& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        if (!it->is_array() || it->empty()) {
            throw std::invalid_argument(where_ + "." + key + ": expected a non-empty array of ratios");
        }
        out.clear();
        for (const json& r : *it) {
            out.push_back(r.is_string() ? Ratio::parse(r.get<std::string>()) : Ratio::parse(r.dump()));
        }
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw std::invalid_argument(where_ + ": unknown key '" + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

ordered_json ratios_json(const std::vector<Ratio>& ratios) {
    ordered_json out = ordered_json::array();
    for (const Ratio& r : ratios) {
        out.push_back(r.str());
    }
    return out;
}

}  // namespace

RunConfig RunConfig::toy() {
    RunConfig c;
    c.teacher.epochs = 2;
    c.teacher.batch_size = 32;
    c.teacher.base_lr = 2.5e-4;
    c.teacher.warmup_epochs = 1;
    c.teacher.decay_after = 1;
    c.teacher.decay_every = 1;

    c.dst.epochs = 4;
    c.dst.batch_size = 32;
    c.dst.base_lr = 2.5e-4;
    c.dst.warmup_epochs = 0;
    c.dst.decay_after = 2;
    c.dst.decay_every = 1;
    return c;
}

// ==================== Serialization ====================

ordered_json to_json(const ModelConfig& c) {
    ordered_json j;
    j["variant"] = variant_name(c.variant);
    j["hidden"] = c.hidden;
    j["heads"] = c.heads;
    j["layers"] = c.layers;
    j["head_dim"] = c.head_dim;
    j["ffn_hidden"] = c.ffn_hidden;
    j["reduce_hidden"] = c.reduce_hidden;
    j["embed_dim"] = c.embed_dim;
    j["fusion_dim"] = c.fusion_dim;
    j["vocab_size"] = c.vocab_size;
    j["region_feat_dim"] = c.region_feat_dim;
    j["num_answers"] = c.num_answers;
    j["question_len"] = c.question_len;
    j["num_regions"] = c.num_regions;
    j["width_ratios"] = ratios_json(c.width_ratios);
    j["depth_ratios"] = ratios_json(c.depth_ratios);
    j["depth_strategy"] = depth_strategy_name(c.depth_strategy);
    j["width_mode"] = width_mode_name(c.width_mode);
    j["triangle"] = c.triangle;
    j["ln_eps"] = c.ln_eps;
    return j;
}

ordered_json to_json(const TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["base_lr"] = c.base_lr;
    j["warmup_epochs"] = c.warmup_epochs;
    j["decay_factor"] = c.decay_factor;
    j["decay_every"] = c.decay_every;
    j["decay_after"] = c.decay_after;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["k"] = c.k;
    j["kd_kind"] = kd_kind_name(c.kd_kind);
    j["strategy"] = strategy_name(c.strategy);
    j["init"] = init_mode_name(c.init);
    j["seed"] = c.seed;
    j["max_steps"] = c.max_steps;
    return j;
}

ordered_json to_json(const DataConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["train_size"] = c.train_size;
    j["val_size"] = c.val_size;
    return j;
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["model"] = to_json(c.model);
    j["teacher"] = to_json(c.teacher);
    j["dst"] = to_json(c.dst);
    j["data"] = to_json(c.data);
    return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
    FieldReader r(j, "model");
    r.read_as("variant", c.variant, parse_variant);
    r.read("hidden", c.hidden);
    r.read("heads", c.heads);
    r.read("layers", c.layers);
    r.read("head_dim", c.head_dim);
    r.read("ffn_hidden", c.ffn_hidden);
    r.read("reduce_hidden", c.reduce_hidden);
    r.read("embed_dim", c.embed_dim);
    r.read("fusion_dim", c.fusion_dim);
    r.read("vocab_size", c.vocab_size);
    r.read("region_feat_dim", c.region_feat_dim);
    r.read("num_answers", c.num_answers);
    r.read("question_len", c.question_len);
    r.read("num_regions", c.num_regions);
    r.read_ratios("width_ratios", c.width_ratios);
    r.read_ratios("depth_ratios", c.depth_ratios);
    r.read_as("depth_strategy", c.depth_strategy, parse_depth_strategy);
    r.read_as("width_mode", c.width_mode, parse_width_mode);
    r.read("triangle", c.triangle);
    r.read("ln_eps", c.ln_eps);
    r.finish();
    c.validate();
    return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    FieldReader r(j, "train");
    r.read("epochs", c.epochs);
    r.read("batch_size", c.batch_size);
    r.read("base_lr", c.base_lr);
    r.read("warmup_epochs", c.warmup_epochs);
    r.read("decay_factor", c.decay_factor);
    r.read("decay_every", c.decay_every);
    r.read("decay_after", c.decay_after);
    r.read("beta1", c.beta1);
    r.read("beta2", c.beta2);
    r.read("adam_eps", c.adam_eps);
    r.read("k", c.k);
    r.read_as("kd_kind", c.kd_kind, parse_kd_kind);
    r.read_as("strategy", c.strategy, parse_strategy);
    r.read_as("init", c.init, parse_init_mode);
    r.read("seed", c.seed);
    r.read("max_steps", c.max_steps);
    r.finish();
    c.validate();
    return c;
}

DataConfig data_config_from_json(const json& j, DataConfig c) {
    FieldReader r(j, "data");
    r.read("seed", c.seed);
    r.read("train_size", c.train_size);
    r.read("val_size", c.val_size);
    r.finish();
    return c;
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
    if (!j.is_object()) {
        throw std::invalid_argument("config: expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key != "model" && key != "teacher" && key != "dst" && key != "data") {
            throw std::invalid_argument("config: unknown section '" + key + "'");
        }
    }
    if (j.contains("model")) {
        base.model = model_config_from_json(j["model"], base.model);
    }
    if (j.contains("teacher")) {
        base.teacher = train_config_from_json(j["teacher"], base.teacher);
    }
    if (j.contains("dst")) {
        base.dst = train_config_from_json(j["dst"], base.dst);
    }
    if (j.contains("data")) {
        base.data = data_config_from_json(j["data"], base.data);
    }
    return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config '" + path.string() + "'");
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config '" + path.string() + "': " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace dst
