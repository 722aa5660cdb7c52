#pragma once

// JSON experiment configuration. Every object is read strictly: a key the
// schema does not know is a ConfigError naming its dotted path.
//
// {
//   "stream":     { DriftConfig fields },
//   "dataset":    "path/to/stream.tsv",          optional; replaces generation
//   "defaults":   { strategy fields },           applied before each strategy
//   "strategies": [ { "kind": "colf", ... } ],
//   "seeds":      [1, 2, 3],
//   "output_dir": "results/main",
//   "report":     { "baseline": "incremental", "last_k": 5,
//                   "diagnostics": true, "probe_train_day": 1, "probe_max_gap": 14 }
// }

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "colf/continual.hpp"
#include "colf/error.hpp"
#include "colf/memory.hpp"
#include "colf/stream.hpp"

namespace colf::config {

using json = nlohmann::json;

struct ReportOptions {
    std::string baseline = "incremental";
    std::size_t last_k = 5;
    bool diagnostics = true;
    int probe_train_day = 1;
    int probe_max_gap = 14;

    bool operator==(const ReportOptions&) const = default;
};

struct ExperimentConfig {
    stream::DriftConfig stream;
    bool stream_seed_given = false;
    std::optional<std::string> dataset;
    std::vector<continual::StrategyConfig> strategies;
    std::vector<std::uint64_t> seeds;
    std::string output_dir;
    ReportOptions report;
};

// Integers parsed from text are unsigned when non-negative; values built in
// code may be signed.
inline bool is_non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Reads keys of one JSON object and rejects whatever is left unread.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* take(const std::string& key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    void get(const std::string& key, double& out) {
        if (auto v = take(key)) {
            if (!v->is_number()) throw ConfigError(path(key), "must be a number");
            out = v->get<double>();
        }
    }

    void get(const std::string& key, std::uint64_t& out) {
        if (auto v = take(key)) {
            if (!is_non_negative_integer(*v)) throw ConfigError(path(key), "must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void get(const std::string& key, int& out) {
        if (auto v = take(key)) {
            if (!v->is_number_integer()) throw ConfigError(path(key), "must be an integer");
            const auto x = v->get<std::int64_t>();
            if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                throw ConfigError(path(key), "out of range");
            }
            out = static_cast<int>(x);
        }
    }

    void get(const std::string& key, bool& out) {
        if (auto v = take(key)) {
            if (!v->is_boolean()) throw ConfigError(path(key), "must be true or false");
            out = v->get<bool>();
        }
    }

    void get(const std::string& key, std::string& out) {
        if (auto v = take(key)) {
            if (!v->is_string()) throw ConfigError(path(key), "must be a string");
            out = v->get<std::string>();
        }
    }

    void get_size(const std::string& key, std::size_t& out) {
        std::uint64_t v = out;
        get(key, v);
        out = static_cast<std::size_t>(v);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.contains(it.key())) throw ConfigError(path(it.key()), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline stream::DriftConfig parse_stream(const json& j, const std::string& path, bool* seed_given = nullptr) {
    stream::DriftConfig c;
    ObjectReader r(j, path);
    r.get("n_days", c.n_days);
    r.get_size("n_users", c.n_users);
    r.get_size("catalog_size", c.catalog_size);
    r.get("churn_rate", c.churn_rate);
    r.get_size("impressions_per_day", c.impressions_per_day);
    r.get_size("latent_dim", c.latent_dim);
    r.get("drift_step", c.drift_step);
    r.get("popularity_skew", c.popularity_skew);
    r.get("base_ctr", c.base_ctr);
    if (seed_given) *seed_given = r.has("seed");
    r.get("seed", c.seed);
    r.get_size("context_fields", c.context_fields);
    r.get_size("context_cardinality", c.context_cardinality);
    r.get("rank_drift", c.rank_drift);
    r.get("signal_scale", c.signal_scale);
    r.finish();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(r.path(e.field()), e.reason());
    }
    return c;
}

inline void parse_train(const json& j, const std::string& path, nn::TrainHyper& h) {
    ObjectReader r(j, path);
    r.get_size("epochs", h.epochs);
    r.get_size("batch_size", h.batch_size);
    if (auto v = r.take("optimizer")) {
        if (!v->is_string()) throw ConfigError(r.path("optimizer"), "must be a string");
        const auto name = v->get<std::string>();
        if (name == "adam") h.optimizer.kind = nn::OptimizerKind::adam;
        else if (name == "sgd") h.optimizer.kind = nn::OptimizerKind::sgd;
        else throw ConfigError(r.path("optimizer"), "unknown optimizer '" + name + "'");
    }
    r.get("learning_rate", h.optimizer.learning_rate);
    r.get("beta1", h.optimizer.beta1);
    r.get("beta2", h.optimizer.beta2);
    r.get("eps", h.optimizer.eps);
    r.get("seed", h.seed);
    r.finish();
    if (h.batch_size == 0) throw ConfigError(r.path("batch_size"), "must be positive");
    if (!(h.optimizer.learning_rate > 0.0)) throw ConfigError(r.path("learning_rate"), "must be positive");
}

// Fills `c` from the strategy fields present in `j`; absent keys keep their
// current values, which is how "defaults" layer under each strategy.
inline void apply_strategy_fields(const json& j, const std::string& path, continual::StrategyConfig& c,
                                  bool allow_identity) {
    ObjectReader r(j, path);
    if (allow_identity) {
        r.get("name", c.name);
        if (auto v = r.take("kind")) {
            if (!v->is_string()) throw ConfigError(r.path("kind"), "must be a string");
            try {
                c.kind = continual::strategy_kind_from_string(v->get<std::string>());
            } catch (const ConfigError& e) {
                throw ConfigError(r.path("kind"), e.reason());
            }
        } else {
            throw ConfigError(r.path("kind"), "required");
        }
    }
    r.get("lambda", c.lambda);
    r.get_size("window", c.window);
    if (auto v = r.take("share")) {
        if (!v->is_string()) throw ConfigError(r.path("share"), "must be a string");
        const auto s = v->get<std::string>();
        if (s == "frozen") c.share = model::EmbeddingShare::frozen;
        else if (s == "fine_tune") c.share = model::EmbeddingShare::fine_tune;
        else throw ConfigError(r.path("share"), "unknown sharing mode '" + s + "'");
    }
    if (auto v = r.take("ablations")) {
        ObjectReader a(*v, r.path("ablations"));
        a.get("no_modular", c.ablations.no_modular);
        a.get("no_old_discard", c.ablations.no_old_discard);
        a.get("no_relevant", c.ablations.no_relevant);
        a.get("no_new", c.ablations.no_new);
        a.finish();
    }
    if (auto v = r.take("policy")) {
        ObjectReader p(*v, r.path("policy"));
        p.get("epsilon", c.policy.epsilon);
        p.get("epsilon_p", c.policy.epsilon_p);
        p.get_size("cap", c.policy.cap);
        if (auto cv = p.take("criterion")) {
            if (!cv->is_string()) throw ConfigError(p.path("criterion"), "must be a string");
            c.policy.criterion = memory::criterion_from_string(cv->get<std::string>());
        }
        p.finish();
    }
    if (auto v = r.take("model")) {
        ObjectReader m(*v, r.path("model"));
        if (auto k = m.take("kind")) {
            if (!k->is_string()) throw ConfigError(m.path("kind"), "must be a string");
            try {
                c.model.kind = nn::model_kind_from_string(k->get<std::string>());
            } catch (const ConfigError& e) {
                throw ConfigError(m.path("kind"), e.reason());
            }
        }
        m.get_size("embedding_dim", c.model.embedding_dim);
        if (auto h = m.take("hidden")) {
            if (!h->is_array()) throw ConfigError(m.path("hidden"), "must be an array of widths");
            c.model.hidden.clear();
            for (const auto& w : *h) {
                if (!is_non_negative_integer(w) || w.get<std::uint64_t>() == 0) {
                    throw ConfigError(m.path("hidden"), "widths must be positive integers");
                }
                c.model.hidden.push_back(w.get<std::size_t>());
            }
        }
        m.get("init_scale", c.model.init_scale);
        m.finish();
    }
    if (auto v = r.take("base_train")) parse_train(*v, r.path("base_train"), c.base_hyper);
    if (auto v = r.take("head_train")) parse_train(*v, r.path("head_train"), c.head_hyper);
    r.finish();
}

inline continual::StrategyConfig parse_strategy(const json& j, const std::string& path,
                                                const continual::StrategyConfig& defaults) {
    auto c = defaults;
    apply_strategy_fields(j, path, c, true);
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + "." + e.field(), e.reason());
    }
    return c;
}

inline ExperimentConfig parse_experiment(const json& j) {
    ExperimentConfig c;
    ObjectReader r(j, "");
    if (auto v = r.take("stream")) c.stream = parse_stream(*v, "stream", &c.stream_seed_given);
    if (auto v = r.take("dataset")) {
        if (!v->is_string()) throw ConfigError("dataset", "must be a string");
        c.dataset = v->get<std::string>();
    }
    continual::StrategyConfig defaults;
    if (auto v = r.take("defaults")) apply_strategy_fields(*v, "defaults", defaults, false);
    if (auto v = r.take("strategies")) {
        if (!v->is_array()) throw ConfigError("strategies", "must be an array");
        std::set<std::string> labels;
        for (std::size_t k = 0; k < v->size(); ++k) {
            const auto path = "strategies[" + std::to_string(k) + "]";
            auto s = parse_strategy((*v)[k], path, defaults);
            if (!labels.insert(s.label()).second) {
                throw ConfigError(path + ".name", "duplicate strategy label '" + s.label() + "'");
            }
            c.strategies.push_back(std::move(s));
        }
    }
    if (auto v = r.take("seeds")) {
        if (!v->is_array()) throw ConfigError("seeds", "must be an array of non-negative integers");
        std::set<std::uint64_t> seen;
        for (const auto& s : *v) {
            if (!is_non_negative_integer(s)) throw ConfigError("seeds", "must be an array of non-negative integers");
            const auto seed = s.get<std::uint64_t>();
            if (!seen.insert(seed).second) throw ConfigError("seeds", "duplicate seed " + std::to_string(seed));
            c.seeds.push_back(seed);
        }
    }
    r.get("output_dir", c.output_dir);
    if (auto v = r.take("report")) {
        ObjectReader rep(*v, "report");
        rep.get("baseline", c.report.baseline);
        rep.get_size("last_k", c.report.last_k);
        rep.get("diagnostics", c.report.diagnostics);
        rep.get("probe_train_day", c.report.probe_train_day);
        rep.get("probe_max_gap", c.report.probe_max_gap);
        rep.finish();
        if (c.report.last_k == 0) throw ConfigError("report.last_k", "must be positive");
        if (c.report.probe_max_gap < 1) throw ConfigError("report.probe_max_gap", "must be at least 1");
    }
    r.finish();
    return c;
}

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
}

inline ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(load_json(path)); }

// Checks what `run` needs beyond parsing.
inline void require_runnable(const ExperimentConfig& c) {
    if (c.strategies.empty()) throw ConfigError("strategies", "at least one strategy required");
    if (c.seeds.empty()) throw ConfigError("seeds", "at least one seed required");
    if (c.output_dir.empty()) throw ConfigError("output_dir", "required");
    bool has_baseline = false;
    for (const auto& s : c.strategies) has_baseline |= s.label() == c.report.baseline;
    if (!has_baseline) throw ConfigError("report.baseline", "'" + c.report.baseline + "' is not a strategy label");
    std::size_t cap = 0;
    for (const auto& s : c.strategies) {
        if (s.kind == continual::StrategyKind::incremental) continue;
        if (cap == 0) cap = s.policy.cap;
        else if (s.policy.cap != cap) throw ConfigError("policy.cap", "memory strategies must share one cap");
    }
}

} // namespace colf::config
