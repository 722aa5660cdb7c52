#pragma once

// CTR models (LR, embedding-MLP) and the modular base/inference pair: the
// base model g is trained on each day's data, the inference model f reuses
// g's embedding tables and grows its own dense stack trained on replay memory.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "colf/error.hpp"
#include "colf/memory_store.hpp"
#include "colf/nn.hpp"
#include "colf/sample.hpp"

namespace colf::model {

using nn::ModelKind;
using nn::ModelParams;
using nn::TrainHyper;

struct ModelConfig {
    ModelKind kind = ModelKind::embed_mlp;
    std::size_t embedding_dim = 8;
    std::vector<std::size_t> hidden{32};
    double init_scale = nn::kDefaultInitScale;

    bool operator==(const ModelConfig&) const = default;
};

inline ModelParams make_model(std::size_t context_fields, const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.embedding_dim == 0) throw ConfigError("model.embedding_dim", "must be positive");
    auto schema = FeatureSchema::standard(context_fields, cfg.embedding_dim);
    if (cfg.kind == ModelKind::lr) return nn::init_logistic(schema, seed, cfg.init_scale);
    return nn::init_params(schema, std::span<const std::size_t>(cfg.hidden), seed, cfg.init_scale);
}

// How the inference head relates to the base model's embedding tables.
enum class EmbeddingShare {
    frozen,    // head reads g's tables, never writes them
    fine_tune, // head trains a private copy of the tables
};

// f = (shared embeddings of g, own dense stack).
struct ModularPair {
    std::shared_ptr<const ModelParams> base;
    nn::DenseStack head;
    std::optional<std::vector<nn::EmbeddingTable>> tuned_tables;

    const FeatureSchema& schema() const { return base->schema; }
    const std::vector<nn::EmbeddingTable>& tables() const { return tuned_tables ? *tuned_tables : base->tables; }

    bool operator==(const ModularPair& o) const {
        return *base == *o.base && head == o.head && tuned_tables == o.tuned_tables;
    }
};

// Inference model retained for a past day; never modified once stored.
struct ModelSnapshot {
    int day = 0;
    ModularPair model;

    bool operator==(const ModelSnapshot&) const = default;
};

// Registers every id in `data` in place. Returns the number of rows added.
inline std::size_t register_ids(ModelParams& params, std::span<const ClickSample> data) {
    FieldIndex index(params.schema);
    std::size_t added = 0;
    for (const auto& s : data) {
        for (std::size_t f = 0; f < params.tables.size(); ++f) {
            auto& t = params.tables[f];
            const Id id = index.id(f, s);
            if (!t.contains(id)) {
                t.insert(id);
                ++added;
            }
        }
    }
    return added;
}

inline ModelParams register_new_ids(ModelParams params, const DayPartition& data) {
    register_ids(params, data.samples);
    return params;
}

// Trains g_{t-1} on day t only. `state` carries optimizer moments across days;
// when null a fresh optimizer is used.
inline ModelParams update_base(ModelParams g, const DayPartition& data, const TrainHyper& hyper,
                               nn::OptimizerState* state = nullptr) {
    if (data.empty()) throw InputError("update_base: empty partition for day " + std::to_string(data.day));
    if (hyper.epochs == 0) return g;
    const auto labels = data.labels();
    nn::Objective obj{labels};
    nn::OptimizerState local(hyper.optimizer);
    nn::train(g.schema, g.tables, g.head, data.samples, obj, hyper, state ? *state : local);
    return g;
}

// New inference model whose dense stack starts as a copy of g's.
inline ModularPair spawn_head(std::shared_ptr<const ModelParams> g) {
    ModularPair pair;
    pair.head = g->head;
    pair.base = std::move(g);
    return pair;
}

inline ModularPair spawn_head(const ModelParams& g) { return spawn_head(std::make_shared<const ModelParams>(g)); }

struct PredictStats {
    std::size_t unseen_lookups = 0;
};

// Ids missing from the tables are scored with the deterministic row they
// would receive on registration; the parameters are not modified.
inline std::vector<double> predict(const FeatureSchema& schema, const std::vector<nn::EmbeddingTable>& tables,
                                   const nn::DenseStack& stack, std::span<const ClickSample> data,
                                   PredictStats* stats = nullptr) {
    nn::Net net(schema, tables, stack, nn::UnseenIds::fresh);
    std::vector<double> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(net.predict(s));
    if (stats) stats->unseen_lookups += net.unseen_lookups();
    return out;
}

inline std::vector<double> predict(const ModelParams& m, std::span<const ClickSample> data,
                                   PredictStats* stats = nullptr) {
    return predict(m.schema, m.tables, m.head, data, stats);
}

inline std::vector<double> predict(const ModularPair& f, std::span<const ClickSample> data,
                                   PredictStats* stats = nullptr) {
    return predict(f.schema(), f.tables(), f.head, data, stats);
}

// Combined per-sample replay objective: bce(f(x), y) + lambda * bce(f(x), g(x)).
inline double head_objective(const ModularPair& pair, std::span<const ClickSample> data, double lambda) {
    std::vector<double> labels;
    labels.reserve(data.size());
    for (const auto& s : data) labels.push_back(s.label);
    std::vector<double> teacher;
    if (lambda != 0.0) teacher = predict(*pair.base, data);
    nn::Objective obj{labels, teacher, lambda};
    return nn::mean_objective(pair.schema(), pair.tables(), pair.head, data, obj);
}

// Trains f's dense stack on replay exemplars with a distillation pull towards
// the base model's predictions. Under frozen sharing the embeddings are
// read-only; the base model is never modified.
inline ModularPair train_head(ModularPair pair, std::span<const ClickSample> exemplars, double lambda,
                              const TrainHyper& hyper, EmbeddingShare share = EmbeddingShare::frozen) {
    if (exemplars.empty()) throw InputError("train_head_on_memory: empty memory");
    if (lambda < 0.0) throw ConfigError("lambda", "must be non-negative");
    std::vector<double> labels;
    labels.reserve(exemplars.size());
    for (const auto& s : exemplars) labels.push_back(s.label);
    std::vector<double> teacher;
    if (lambda != 0.0) teacher = predict(*pair.base, exemplars);
    nn::Objective obj{labels, teacher, lambda};
    nn::OptimizerState state(hyper.optimizer);
    if (share == EmbeddingShare::frozen) {
        nn::train_dense(pair.schema(), pair.tables(), pair.head, exemplars, obj, hyper, state);
    } else {
        if (!pair.tuned_tables) pair.tuned_tables = pair.base->tables;
        nn::train(pair.schema(), *pair.tuned_tables, pair.head, exemplars, obj, hyper, state);
    }
    return pair;
}

inline ModularPair train_head_on_memory(ModularPair pair, const MemoryStore& memory, double lambda,
                                        const TrainHyper& hyper, EmbeddingShare share = EmbeddingShare::frozen) {
    if (memory.empty()) throw InputError("train_head_on_memory: empty memory");
    const auto exemplars = memory.flatten();
    return train_head(std::move(pair), exemplars, lambda, hyper, share);
}

} // namespace colf::model
