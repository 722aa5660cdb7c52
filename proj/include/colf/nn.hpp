#pragma once

// Minimal neural-network engine for embedding CTR models: embedding lookup,
// dense layers, sigmoid output, clipped cross-entropy, hand-written
// backpropagation and SGD/Adam. Everything is seeded and single-threaded so a
// (seed, config, data) triple determines every parameter bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "colf/error.hpp"
#include "colf/random.hpp"
#include "colf/sample.hpp"

namespace colf::nn {

inline constexpr double kClipEps = 1e-7;
inline constexpr double kDefaultInitScale = 0.05;

inline double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    // Keep the output inside the open interval even when exp saturates.
    constexpr double lo = std::numeric_limits<double>::denorm_min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::clamp(p, lo, hi);
}

inline double clip_prob(double p) { return std::clamp(p, kClipEps, 1.0 - kClipEps); }

// Cross-entropy of prediction p against a (possibly soft) target t in [0,1].
inline double bce(double p, double t) {
    const double pc = clip_prob(p);
    return -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
}

// Mean clipped binary cross-entropy.
inline double logloss(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) {
        throw InputError("logloss: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (preds.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) sum += bce(preds[i], labels[i]);
    return sum / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Parameters

class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::string field, std::size_t dim, double init_scale, std::uint64_t seed)
        : field_(std::move(field)), dim_(dim), init_scale_(init_scale), seed_(seed) {}

    const std::string& field() const { return field_; }
    std::size_t dim() const { return dim_; }
    double init_scale() const { return init_scale_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t size() const { return ids_.size(); }

    std::optional<std::size_t> find(Id id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(Id id) const { return index_.contains(id); }

    // Adds a row for `id` unless present; returns its row index. The row is a
    // function of (table seed, id) only, so registration order is irrelevant.
    std::size_t insert(Id id) {
        if (auto r = find(id)) return *r;
        const std::size_t r = ids_.size();
        ids_.push_back(id);
        index_.emplace(id, r);
        values_.resize(values_.size() + dim_);
        fresh_row(id, std::span<double>(values_).subspan(r * dim_, dim_));
        return r;
    }

    // Row content a new id would receive, without registering it.
    void fresh_row(Id id, std::span<double> out) const {
        Rng rng(derive_seed({seed_, id}));
        for (auto& x : out) x = rng.uniform(-init_scale_, init_scale_);
    }

    // Appends a row with explicit values (deserialization).
    void insert_with_values(Id id, std::span<const double> row) {
        if (row.size() != dim_) throw InputError("embedding row width mismatch for field " + field_);
        if (contains(id)) throw InputError("duplicate embedding id " + std::to_string(id));
        ids_.push_back(id);
        index_.emplace(id, ids_.size() - 1);
        values_.insert(values_.end(), row.begin(), row.end());
    }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values_).subspan(r * dim_, dim_);
    }
    std::span<double> row(std::size_t r) { return std::span<double>(values_).subspan(r * dim_, dim_); }

    const std::vector<Id>& ids() const { return ids_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const EmbeddingTable& o) const {
        return field_ == o.field_ && dim_ == o.dim_ && init_scale_ == o.init_scale_ &&
               seed_ == o.seed_ && ids_ == o.ids_ && values_ == o.values_;
    }

private:
    std::string field_;
    std::size_t dim_ = 0;
    double init_scale_ = kDefaultInitScale;
    std::uint64_t seed_ = 0;
    std::vector<Id> ids_;
    std::unordered_map<Id, std::size_t> index_;
    std::vector<double> values_;
};

enum class Activation { relu, identity };

// Fully connected layer. `weight` is stored input-major: w(i, o) = weight[i * out + o].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;
    std::vector<double> bias;
    Activation activation = Activation::identity;

    double w(std::size_t i, std::size_t o) const { return weight[i * out + o]; }
    double& w(std::size_t i, std::size_t o) { return weight[i * out + o]; }

    bool operator==(const DenseLayer&) const = default;
};

// Hidden ReLU layers followed by a width-1 identity layer; the sigmoid is
// applied by the caller.
struct DenseStack {
    std::vector<DenseLayer> layers;

    std::size_t input_width() const { return layers.empty() ? 0 : layers.front().in; }

    std::size_t max_width() const {
        std::size_t w = input_width();
        for (const auto& l : layers) w = std::max(w, l.out);
        return w;
    }

    void validate(std::size_t input) const {
        if (layers.empty()) throw InputError("dense stack has no layers");
        std::size_t width = input;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const auto& l = layers[k];
            if (l.in != width) {
                throw InputError("dense layer " + std::to_string(k) + " expects width " +
                                 std::to_string(l.in) + ", got " + std::to_string(width));
            }
            if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
                throw InputError("dense layer " + std::to_string(k) + " has inconsistent storage");
            }
            width = l.out;
        }
        if (width != 1) throw InputError("dense stack must end in a single output");
    }

    bool operator==(const DenseStack&) const = default;
};

enum class ModelKind { lr, embed_mlp };

inline const char* to_string(ModelKind k) { return k == ModelKind::lr ? "lr" : "embed_mlp"; }

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "lr") return ModelKind::lr;
    if (s == "embed_mlp") return ModelKind::embed_mlp;
    throw ConfigError("model.kind", "unknown model kind '" + s + "'");
}

// Embedding tables (one per schema field, in schema order) plus dense head.
struct ModelParams {
    FeatureSchema schema;
    ModelKind kind = ModelKind::embed_mlp;
    std::vector<EmbeddingTable> tables;
    DenseStack head;
    std::uint64_t seed = 0;

    bool operator==(const ModelParams&) const = default;
};

namespace detail {

inline DenseLayer make_layer(std::size_t in, std::size_t out, Activation act, double scale, Rng& rng) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    l.activation = act;
    l.weight.resize(in * out);
    for (auto& x : l.weight) x = rng.uniform(-scale, scale);
    l.bias.assign(out, 0.0);
    return l;
}

inline std::vector<EmbeddingTable> make_tables(const FeatureSchema& schema, std::uint64_t seed, double scale) {
    std::vector<EmbeddingTable> tables;
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& spec = schema.fields[f];
        tables.emplace_back(spec.name, spec.dim, scale, derive_seed({seed, 0xE3B0ULL, f}));
    }
    return tables;
}

} // namespace detail

// Embedding-MLP: concatenated embeddings -> ReLU hidden layers -> logit.
inline ModelParams init_params(const FeatureSchema& schema, std::span<const std::size_t> hidden_widths,
                               std::uint64_t seed, double init_scale = kDefaultInitScale) {
    schema.validate();
    if (hidden_widths.empty()) throw ConfigError("model.hidden", "at least one hidden layer is required");
    for (auto w : hidden_widths) {
        if (w == 0) throw ConfigError("model.hidden", "hidden layer width must be positive");
    }
    ModelParams p;
    p.schema = schema;
    p.kind = ModelKind::embed_mlp;
    p.seed = seed;
    p.tables = detail::make_tables(schema, seed, init_scale);
    Rng rng(derive_seed({seed, 0xDE45EULL}));
    std::size_t width = schema.input_width();
    for (auto h : hidden_widths) {
        p.head.layers.push_back(detail::make_layer(width, h, Activation::relu, init_scale, rng));
        width = h;
    }
    p.head.layers.push_back(detail::make_layer(width, 1, Activation::identity, init_scale, rng));
    return p;
}

inline ModelParams init_params(const FeatureSchema& schema, std::initializer_list<std::size_t> hidden,
                               std::uint64_t seed, double init_scale = kDefaultInitScale) {
    std::vector<std::size_t> h(hidden);
    return init_params(schema, std::span<const std::size_t>(h), seed, init_scale);
}

// Logistic regression over the embeddings: a single linear layer, no hidden stack.
inline ModelParams init_logistic(const FeatureSchema& schema, std::uint64_t seed,
                                 double init_scale = kDefaultInitScale) {
    schema.validate();
    ModelParams p;
    p.schema = schema;
    p.kind = ModelKind::lr;
    p.seed = seed;
    p.tables = detail::make_tables(schema, seed, init_scale);
    Rng rng(derive_seed({seed, 0xDE45EULL}));
    p.head.layers.push_back(detail::make_layer(schema.input_width(), 1, Activation::identity, init_scale, rng));
    return p;
}

// ---------------------------------------------------------------------------
// Gradients and optimizer state

// Sparse per-row gradient of one embedding table.
class RowGradients {
public:
    RowGradients() = default;
    explicit RowGradients(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    const std::vector<std::size_t>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }

    std::span<double> accumulator(std::size_t row) {
        auto [it, inserted] = slot_.try_emplace(row, rows_.size());
        if (inserted) {
            rows_.push_back(row);
            values_.resize(values_.size() + dim_, 0.0);
        }
        return std::span<double>(values_).subspan(it->second * dim_, dim_);
    }

    std::optional<std::span<const double>> find(std::size_t row) const {
        auto it = slot_.find(row);
        if (it == slot_.end()) return std::nullopt;
        return std::span<const double>(values_).subspan(it->second * dim_, dim_);
    }

    std::span<const double> at_slot(std::size_t k) const {
        return std::span<const double>(values_).subspan(k * dim_, dim_);
    }

    void scale(double s) {
        for (auto& v : values_) v *= s;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::size_t> rows_;
    std::unordered_map<std::size_t, std::size_t> slot_;
    std::vector<double> values_;
};

struct LayerGradients {
    std::vector<double> weight;
    std::vector<double> bias;
};

// Mirrors the parameter tree; embedding entries exist only for touched rows.
// `embeddings` is empty when embeddings are not being differentiated.
struct Gradients {
    std::vector<RowGradients> embeddings;
    std::vector<LayerGradients> dense;

    static Gradients zeros_like(const std::vector<EmbeddingTable>* tables, const DenseStack& stack) {
        Gradients g;
        if (tables) {
            for (const auto& t : *tables) g.embeddings.emplace_back(t.dim());
        }
        for (const auto& l : stack.layers) {
            g.dense.push_back({std::vector<double>(l.weight.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
        }
        return g;
    }

    void scale(double s) {
        for (auto& e : embeddings) e.scale(s);
        for (auto& d : dense) {
            for (auto& v : d.weight) v *= s;
            for (auto& v : d.bias) v *= s;
        }
    }
};

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    bool operator==(const OptimizerConfig&) const = default;
};

struct OptimizerState {
    OptimizerConfig config;
    std::uint64_t step = 0;
    std::vector<LayerGradients> dense_m, dense_v;
    std::vector<std::vector<double>> emb_m, emb_v;

    OptimizerState() = default;
    explicit OptimizerState(OptimizerConfig c) : config(c) {
        if (!(c.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate", "must be positive");
    }
};

namespace detail {

inline void check_shapes(const std::vector<EmbeddingTable>* tables, const DenseStack& stack, const Gradients& g) {
    if (g.dense.size() != stack.layers.size()) throw InputError("gradient/parameter layer count mismatch");
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        if (g.dense[k].weight.size() != stack.layers[k].weight.size() ||
            g.dense[k].bias.size() != stack.layers[k].bias.size()) {
            throw InputError("gradient shape mismatch at dense layer " + std::to_string(k));
        }
    }
    if (g.embeddings.empty()) return;
    if (!tables || tables->size() != g.embeddings.size()) throw InputError("gradient/parameter table count mismatch");
    for (std::size_t f = 0; f < tables->size(); ++f) {
        if (g.embeddings[f].dim() != (*tables)[f].dim()) throw InputError("embedding gradient width mismatch");
        for (auto r : g.embeddings[f].rows()) {
            if (r >= (*tables)[f].size()) throw InputError("embedding gradient row out of range");
        }
    }
}

struct AdamScalars {
    double lr, b1, b2, eps, c1, c2;
};

inline void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                        const AdamScalars& a) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = a.b1 * m[i] + (1.0 - a.b1) * g[i];
        v[i] = a.b2 * v[i] + (1.0 - a.b2) * g[i] * g[i];
        const double mh = m[i] / a.c1;
        const double vh = v[i] / a.c2;
        p[i] -= a.lr * mh / (std::sqrt(vh) + a.eps);
    }
}

} // namespace detail

// One descent step. Tables may be null when only the dense stack is trained.
// Only embedding rows with a gradient entry are touched.
inline void apply_step(std::vector<EmbeddingTable>* tables, DenseStack& stack, const Gradients& grads,
                       OptimizerState& state) {
    detail::check_shapes(tables, stack, grads);
    const auto& cfg = state.config;
    ++state.step;

    if (cfg.kind == OptimizerKind::sgd) {
        for (std::size_t k = 0; k < stack.layers.size(); ++k) {
            auto& l = stack.layers[k];
            for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] -= cfg.learning_rate * grads.dense[k].weight[i];
            for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= cfg.learning_rate * grads.dense[k].bias[i];
        }
        for (std::size_t f = 0; f < grads.embeddings.size(); ++f) {
            const auto& eg = grads.embeddings[f];
            for (std::size_t s = 0; s < eg.rows().size(); ++s) {
                auto row = (*tables)[f].row(eg.rows()[s]);
                auto g = eg.at_slot(s);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] -= cfg.learning_rate * g[j];
            }
        }
        return;
    }

    const double t = static_cast<double>(state.step);
    const detail::AdamScalars a{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps,
                                1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};

    if (state.dense_m.size() != stack.layers.size()) {
        state.dense_m.clear();
        state.dense_v.clear();
        for (const auto& l : stack.layers) {
            state.dense_m.push_back({std::vector<double>(l.weight.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
            state.dense_v.push_back(state.dense_m.back());
        }
    }
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        auto& l = stack.layers[k];
        detail::adam_update(l.weight, grads.dense[k].weight, state.dense_m[k].weight, state.dense_v[k].weight, a);
        detail::adam_update(l.bias, grads.dense[k].bias, state.dense_m[k].bias, state.dense_v[k].bias, a);
    }

    if (grads.embeddings.empty()) return;
    state.emb_m.resize(tables->size());
    state.emb_v.resize(tables->size());
    for (std::size_t f = 0; f < grads.embeddings.size(); ++f) {
        auto& table = (*tables)[f];
        const std::size_t dim = table.dim();
        if (state.emb_m[f].size() < table.size() * dim) {
            state.emb_m[f].resize(table.size() * dim, 0.0);
            state.emb_v[f].resize(table.size() * dim, 0.0);
        }
        const auto& eg = grads.embeddings[f];
        for (std::size_t s = 0; s < eg.rows().size(); ++s) {
            const std::size_t r = eg.rows()[s];
            detail::adam_update(table.row(r), eg.at_slot(s), std::span<double>(state.emb_m[f]).subspan(r * dim, dim),
                                std::span<double>(state.emb_v[f]).subspan(r * dim, dim), a);
        }
    }
}

inline void apply_step(ModelParams& params, const Gradients& grads, OptimizerState& state) {
    apply_step(&params.tables, params.head, grads, state);
}

// ---------------------------------------------------------------------------
// Forward / backward

enum class UnseenIds { error, fresh };

// Evaluates one network (embedding tables + dense stack) sample by sample,
// keeping the activations of the last sample for backpropagation.
class Net {
public:
    Net(const FeatureSchema& schema, const std::vector<EmbeddingTable>& tables, const DenseStack& stack,
        UnseenIds unseen = UnseenIds::error)
        : index_(schema), tables_(tables), stack_(stack), unseen_policy_(unseen) {
        if (tables.size() != schema.size()) throw InputError("table count does not match schema");
        stack.validate(schema.input_width());
        rows_.resize(tables.size());
        offsets_.resize(tables.size());
        std::size_t off = 0;
        for (std::size_t f = 0; f < tables.size(); ++f) {
            offsets_[f] = off;
            off += tables[f].dim();
        }
        acts_.resize(stack.layers.size() + 1);
        acts_[0].resize(off);
        for (std::size_t k = 0; k < stack.layers.size(); ++k) acts_[k + 1].resize(stack.layers[k].out);
        delta_.resize(stack.max_width());
        delta_prev_.resize(stack.max_width());
    }

    Net(const ModelParams& p, UnseenIds unseen = UnseenIds::error) : Net(p.schema, p.tables, p.head, unseen) {}

    double logit(const ClickSample& s) {
        auto& x = acts_[0];
        for (std::size_t f = 0; f < tables_.size(); ++f) {
            const auto& t = tables_[f];
            const Id id = index_.id(f, s);
            auto out = std::span<double>(x).subspan(offsets_[f], t.dim());
            if (auto r = t.find(id)) {
                rows_[f] = *r;
                auto row = t.row(*r);
                std::copy(row.begin(), row.end(), out.begin());
            } else if (unseen_policy_ == UnseenIds::fresh) {
                rows_[f] = kNoRow;
                t.fresh_row(id, out);
                ++unseen_;
            } else {
                throw MissingIdError(t.field(), id);
            }
        }
        for (std::size_t k = 0; k < stack_.layers.size(); ++k) {
            const auto& l = stack_.layers[k];
            const auto& a = acts_[k];
            auto& z = acts_[k + 1];
            std::copy(l.bias.begin(), l.bias.end(), z.begin());
            for (std::size_t i = 0; i < l.in; ++i) {
                const double ai = a[i];
                if (ai == 0.0) continue;
                const double* wrow = l.weight.data() + i * l.out;
                for (std::size_t o = 0; o < l.out; ++o) z[o] += wrow[o] * ai;
            }
            if (l.activation == Activation::relu) {
                for (auto& v : z) v = v > 0.0 ? v : 0.0;
            }
        }
        return acts_.back()[0];
    }

    double predict(const ClickSample& s) { return sigmoid(logit(s)); }

    // Accumulates d(loss)/d(params) given d(loss)/d(logit) for the sample most
    // recently passed to logit(). Embedding rows are differentiated only when
    // `grads.embeddings` is non-empty.
    void backprop(double dlogit, Gradients& grads) {
        const std::size_t n_layers = stack_.layers.size();
        delta_[0] = dlogit;
        for (std::size_t k = n_layers; k-- > 0;) {
            const auto& l = stack_.layers[k];
            const auto& a = acts_[k];
            auto& g = grads.dense[k];
            for (std::size_t o = 0; o < l.out; ++o) g.bias[o] += delta_[o];
            for (std::size_t i = 0; i < l.in; ++i) {
                const double ai = a[i];
                if (ai == 0.0) continue;
                double* grow = g.weight.data() + i * l.out;
                for (std::size_t o = 0; o < l.out; ++o) grow[o] += delta_[o] * ai;
            }
            const bool need_prev = k > 0 || !grads.embeddings.empty();
            if (!need_prev) break;
            const bool relu_below = k > 0 && stack_.layers[k - 1].activation == Activation::relu;
            for (std::size_t i = 0; i < l.in; ++i) {
                if (relu_below && a[i] <= 0.0) {
                    delta_prev_[i] = 0.0;
                    continue;
                }
                const double* wrow = l.weight.data() + i * l.out;
                double s = 0.0;
                for (std::size_t o = 0; o < l.out; ++o) s += wrow[o] * delta_[o];
                delta_prev_[i] = s;
            }
            std::swap(delta_, delta_prev_);
        }
        if (grads.embeddings.empty()) return;
        for (std::size_t f = 0; f < tables_.size(); ++f) {
            if (rows_[f] == kNoRow) continue;
            auto acc = grads.embeddings[f].accumulator(rows_[f]);
            const double* d = delta_.data() + offsets_[f];
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += d[j];
        }
    }

    // Number of lookups that fell back to a fresh (unregistered) row.
    std::size_t unseen_lookups() const { return unseen_; }

private:
    static constexpr std::size_t kNoRow = std::numeric_limits<std::size_t>::max();

    FieldIndex index_;
    const std::vector<EmbeddingTable>& tables_;
    const DenseStack& stack_;
    UnseenIds unseen_policy_;
    std::vector<std::size_t> rows_;
    std::vector<std::size_t> offsets_;
    std::vector<std::vector<double>> acts_;
    std::vector<double> delta_, delta_prev_;
    std::size_t unseen_ = 0;
};

inline std::vector<double> forward(const ModelParams& params, std::span<const ClickSample> batch) {
    Net net(params);
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& s : batch) out.push_back(net.predict(s));
    return out;
}

// Per-sample objective: bce(p, y) + lambda * bce(p, q), where q is an optional
// soft target (e.g. a teacher model's prediction).
struct Objective {
    std::span<const double> labels;
    std::span<const double> soft_targets = {};
    double lambda = 0.0;

    double loss(double p, std::size_t i) const {
        double l = bce(p, labels[i]);
        if (lambda != 0.0) l += lambda * bce(p, soft_targets[i]);
        return l;
    }

    // d(loss)/d(logit). Zero where the prediction is clipped.
    double dlogit(double p, std::size_t i) const {
        if (p < kClipEps || p > 1.0 - kClipEps) return 0.0;
        double g = p - labels[i];
        if (lambda != 0.0) g += lambda * (p - soft_targets[i]);
        return g;
    }

    void check(std::size_t n) const {
        if (labels.size() != n) throw InputError("objective: label count does not match data");
        if (lambda != 0.0 && soft_targets.size() != n) throw InputError("objective: soft target count does not match data");
    }
};

// Mean objective over `data[idx]` and its gradient, accumulated into `grads`
// (which must be zero-initialised with the desired embedding coverage).
inline double accumulate_gradients(Net& net, std::span<const ClickSample> data, std::span<const std::size_t> idx,
                                   const Objective& obj, Gradients& grads) {
    double loss = 0.0;
    for (auto i : idx) {
        const double p = sigmoid(net.logit(data[i]));
        loss += obj.loss(p, i);
        net.backprop(obj.dlogit(p, i), grads);
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    grads.scale(inv);
    return loss * inv;
}

// Loss and exact analytic gradients of the mean clipped cross-entropy.
inline std::pair<double, Gradients> backward(const ModelParams& params, std::span<const ClickSample> batch,
                                             std::span<const double> labels) {
    if (batch.empty()) throw InputError("backward: empty batch");
    Objective obj{labels};
    obj.check(batch.size());
    Net net(params);
    auto grads = Gradients::zeros_like(&params.tables, params.head);
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double loss = accumulate_gradients(net, batch, idx, obj, grads);
    return {loss, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Mini-batch training

struct TrainHyper {
    std::size_t epochs = 1;
    std::size_t batch_size = 256;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;

    bool operator==(const TrainHyper&) const = default;
};

inline double mean_objective(const FeatureSchema& schema, const std::vector<EmbeddingTable>& tables,
                             const DenseStack& stack, std::span<const ClickSample> data, const Objective& obj) {
    if (data.empty()) return 0.0;
    obj.check(data.size());
    Net net(schema, tables, stack);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) sum += obj.loss(net.predict(data[i]), i);
    return sum / static_cast<double>(data.size());
}

namespace detail {

inline void train_loop(const FeatureSchema& schema, const std::vector<EmbeddingTable>& tables,
                       std::vector<EmbeddingTable>* writable, DenseStack& stack, std::span<const ClickSample> data,
                       const Objective& obj, const TrainHyper& hyper, OptimizerState& state) {
    if (hyper.batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
    if (hyper.epochs == 0 || data.empty()) return;
    obj.check(data.size());
    std::vector<std::size_t> order(data.size());
    for (std::size_t e = 0; e < hyper.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed({hyper.seed, 0x5EEDULL, e}));
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t end = std::min(order.size(), start + hyper.batch_size);
            std::span<const std::size_t> batch(order.data() + start, end - start);
            Net net(schema, tables, stack);
            auto grads = Gradients::zeros_like(writable, stack);
            accumulate_gradients(net, data, batch, obj, grads);
            apply_step(writable, stack, grads, state);
        }
    }
}

} // namespace detail

// Shuffled mini-batch descent over embeddings and dense stack.
inline void train(const FeatureSchema& schema, std::vector<EmbeddingTable>& tables, DenseStack& stack,
                  std::span<const ClickSample> data, const Objective& obj, const TrainHyper& hyper,
                  OptimizerState& state) {
    detail::train_loop(schema, tables, &tables, stack, data, obj, hyper, state);
}

// Same, with the embedding tables read-only.
inline void train_dense(const FeatureSchema& schema, const std::vector<EmbeddingTable>& tables, DenseStack& stack,
                        std::span<const ClickSample> data, const Objective& obj, const TrainHyper& hyper,
                        OptimizerState& state) {
    detail::train_loop(schema, tables, nullptr, stack, data, obj, hyper, state);
}

} // namespace colf::nn
