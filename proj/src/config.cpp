#include "mmctr/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mmctr/errors.hpp"

namespace mmctr {

namespace {

std::string join(const std::string& path, const std::string& key) { return path + "/" + key; }

/// Typed access to a JSON object that remembers which keys were consumed.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected a JSON object");
    }

    bool has(const std::string& key) {
        known_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const Json& raw(const std::string& key) {
        known_.insert(key);
        if (!j_.contains(key)) throw ConfigError(join(path_, key) + ": required key is missing");
        return j_.at(key);
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(join(path_, key) + ": expected a non-negative integer");
        return v.get<std::size_t>();
    }

    std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_number_unsigned()) throw ConfigError(join(path_, key) + ": expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    double real(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(join(path_, key) + ": expected a number");
        return v.get<double>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const Json& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(join(path_, key) + ": expected true or false");
        return v.get<bool>();
    }

    std::optional<std::string> string(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const Json& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(join(path_, key) + ": expected a string");
        return v.get<std::string>();
    }

    /// Rejects keys that no accessor asked for.
    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (known_.count(key) == 0) throw ConfigError(join(path_, key) + ": unknown key");
        }
    }

    std::string where() const { return path_.empty() ? "/" : path_; }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> known_;
};

/// Re-throws a validate() failure with the object path in front.
template <typename Fn>
void validated(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        throw ConfigError(path + "/" + e.what());
    }
}

}  // namespace

Json to_json(const ManifoldSpec& spec) {
    return Json{{"kind", to_string(spec.kind())}, {"dim", spec.dim()}, {"curvature", spec.curvature()}};
}

ManifoldSpec manifold_spec_from_json(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    const auto kind_name = r.string("kind");
    if (!kind_name) throw ConfigError(join(path, "kind") + ": required key is missing");
    ManifoldKind kind;
    try {
        kind = manifold_kind_from_string(*kind_name);
    } catch (const ConfigError& e) {
        throw ConfigError(join(path, "kind") + ": " + e.what());
    }
    if (!r.has("dim")) throw ConfigError(join(path, "dim") + ": required key is missing");
    const std::size_t dim = r.count("dim", 0);
    const double c = r.real("curvature", kind == ManifoldKind::PoincareBall ? 1.0 : 0.0);
    r.finish();
    try {
        return ManifoldSpec(kind, dim, c);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

Json to_json(const OptimizerConfig& cfg) {
    Json j{{"learning_rate", cfg.learning_rate},
           {"lr_schedule", to_string(cfg.lr_schedule)},
           {"ball_eps", cfg.ball_eps}};
    j["grad_clip"] = cfg.grad_clip ? Json(*cfg.grad_clip) : Json(nullptr);
    j["attention_weight_decay"] = cfg.attention_weight_decay;
    return j;
}

OptimizerConfig optimizer_config_from_json(const Json& j, const std::string& path) {
    ObjectReader r(j, path);
    OptimizerConfig cfg;
    cfg.learning_rate = r.real("learning_rate", cfg.learning_rate);
    if (const auto name = r.string("lr_schedule")) {
        if (*name != "constant" && *name != "linear") {
            throw ConfigError(join(path, "lr_schedule") + ": expected \"constant\" or \"linear\"");
        }
        cfg.lr_schedule = lr_schedule_from_string(*name);
    }
    cfg.ball_eps = r.real("ball_eps", cfg.ball_eps);
    if (r.has("grad_clip")) cfg.grad_clip = r.real("grad_clip", 0.0);
    cfg.attention_weight_decay = r.real("attention_weight_decay", cfg.attention_weight_decay);
    r.finish();
    validated(path, [&] { cfg.validate(); });
    return cfg;
}

Json to_json(const ModelConfig& cfg, bool with_manifolds) {
    Json j{{"negatives_per_positive", cfg.negatives_per_positive},
           {"init_scale", cfg.init_scale},
           {"update_mode", to_string(cfg.update_mode)},
           {"seed", cfg.seed}};
    if (with_manifolds) {
        Json ms = Json::array();
        for (const auto& s : cfg.manifolds) ms.push_back(to_json(s));
        j["manifolds"] = std::move(ms);
    }
    return j;
}

ModelConfig model_config_from_json(const Json& j, const std::string& path, bool with_manifolds) {
    ObjectReader r(j, path);
    ModelConfig cfg;
    if (with_manifolds) {
        const Json& ms = r.raw("manifolds");
        if (!ms.is_array()) throw ConfigError(join(path, "manifolds") + ": expected an array");
        for (std::size_t i = 0; i < ms.size(); ++i) {
            cfg.manifolds.push_back(manifold_spec_from_json(ms[i], join(path, "manifolds/" + std::to_string(i))));
        }
    }
    cfg.negatives_per_positive = r.count("negatives_per_positive", cfg.negatives_per_positive);
    cfg.init_scale = r.real("init_scale", cfg.init_scale);
    if (auto mode = r.string("update_mode")) {
        try {
            cfg.update_mode = update_mode_from_string(*mode);
        } catch (const ConfigError& e) {
            throw ConfigError(join(path, "update_mode") + ": " + e.what());
        }
    }
    cfg.seed = r.u64("seed", cfg.seed);
    r.finish();
    if (with_manifolds) validated(path, [&] { cfg.validate(); });
    return cfg;
}

Json train_fields_to_json(const TrainConfig& cfg) {
    return Json{{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"eval_every", cfg.eval_every},
                {"deterministic", cfg.deterministic},
                {"optimizer", to_json(cfg.optimizer)}};
}

namespace {

void read_train_fields(ObjectReader& r, const std::string& path, TrainConfig& t) {
    t.epochs = r.count("epochs", t.epochs);
    t.batch_size = r.count("batch_size", t.batch_size);
    t.eval_every = r.count("eval_every", t.eval_every);
    t.deterministic = r.boolean("deterministic", t.deterministic);
    if (r.has("optimizer")) t.optimizer = optimizer_config_from_json(r.raw("optimizer"), join(path, "optimizer"));
}

}  // namespace

TrainConfig train_config_from_json(const Json& j, const std::string& path, ModelConfig model) {
    ObjectReader r(j, path);
    TrainConfig t;
    read_train_fields(r, path, t);
    r.finish();
    t.model = std::move(model);
    validated(path, [&] { t.validate(); });
    return t;
}

RunConfig run_config_from_json(const Json& j) {
    ObjectReader r(j, "");
    RunConfig cfg;
    cfg.data = r.string("data");
    cfg.eval_data = r.string("eval_data");
    cfg.out = r.string("out");
    read_train_fields(r, "", cfg.train);
    cfg.train.model = model_config_from_json(r.raw("model"), "/model");
    r.finish();
    validated("", [&] { cfg.train.validate(); });
    return cfg;
}

Json to_json(const RunConfig& cfg) {
    Json j = train_fields_to_json(cfg.train);
    j["model"] = to_json(cfg.train.model);
    if (cfg.data) j["data"] = *cfg.data;
    if (cfg.eval_data) j["eval_data"] = *cfg.eval_data;
    if (cfg.out) j["out"] = *cfg.out;
    return j;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig cfg = run_config_from_json(j);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    for (auto* p : {&cfg.data, &cfg.eval_data, &cfg.out}) {
        if (*p && std::filesystem::path(**p).is_relative()) **p = (base / **p).string();
    }
    return cfg;
}

}  // namespace mmctr
