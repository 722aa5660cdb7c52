#pragma once

// Day-by-day continual learning over a click stream. Every strategy follows
// the same prequential protocol: predict day t with the model built from days
// < t, score, reveal labels, update.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "colf/baselines.hpp"
#include "colf/error.hpp"
#include "colf/memory.hpp"
#include "colf/metrics.hpp"
#include "colf/model.hpp"
#include "colf/nn.hpp"
#include "colf/stream.hpp"

namespace colf::continual {

enum class StrategyKind { colf, incremental, sliding_window, cbrs, ader_freq };

inline const char* to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::colf: return "colf";
    case StrategyKind::incremental: return "incremental";
    case StrategyKind::sliding_window: return "sliding_window";
    case StrategyKind::cbrs: return "cbrs";
    case StrategyKind::ader_freq: return "ader_freq";
    }
    return "?";
}

inline StrategyKind strategy_kind_from_string(const std::string& s) {
    if (s == "colf") return StrategyKind::colf;
    if (s == "incremental") return StrategyKind::incremental;
    if (s == "sliding_window") return StrategyKind::sliding_window;
    if (s == "cbrs") return StrategyKind::cbrs;
    if (s == "ader_freq") return StrategyKind::ader_freq;
    throw ConfigError("strategy.kind", "unknown strategy '" + s + "'");
}

struct Ablations {
    bool no_modular = false;
    bool no_old_discard = false;
    bool no_relevant = false;
    bool no_new = false;

    bool any() const { return no_modular || no_old_discard || no_relevant || no_new; }
    bool operator==(const Ablations&) const = default;
};

struct StrategyConfig {
    std::string name;
    StrategyKind kind = StrategyKind::colf;
    memory::MemoryPolicyConfig policy;
    double lambda = 1.0;
    Ablations ablations;
    model::ModelConfig model;
    nn::TrainHyper base_hyper;
    nn::TrainHyper head_hyper;
    std::size_t window = 7;
    model::EmbeddingShare share = model::EmbeddingShare::frozen;
    std::uint64_t seed = 1;

    // Explicit name, else the kind with any ablation switches appended.
    std::string label() const {
        if (!name.empty()) return name;
        std::string out = to_string(kind);
        if (ablations.no_modular) out += "-no_modular";
        if (ablations.no_old_discard) out += "-no_old_discard";
        if (ablations.no_relevant) out += "-no_relevant";
        if (ablations.no_new) out += "-no_new";
        return out;
    }

    void validate() const {
        if (ablations.any() && kind != StrategyKind::colf) {
            throw ConfigError("ablations", "ablation switches apply only to the colf strategy");
        }
        if (!(lambda >= 0.0)) throw ConfigError("lambda", "must be non-negative");
        if (window == 0) throw ConfigError("window", "must be positive");
        policy.validate();
        if (base_hyper.batch_size == 0 || head_hyper.batch_size == 0) {
            throw ConfigError("train.batch_size", "must be positive");
        }
        if (!(base_hyper.optimizer.learning_rate > 0.0) || !(head_hyper.optimizer.learning_rate > 0.0)) {
            throw ConfigError("train.learning_rate", "must be positive");
        }
    }
};

struct DayResult {
    int day = 0;
    double auc = 0.0;
    double logloss = 0.0;
    std::size_t memory_size = 0;
    double train_seconds = 0.0;

    bool operator==(const DayResult&) const = default;
};

struct RunResult {
    std::string strategy;
    std::uint64_t seed = 0;
    std::vector<DayResult> rows;
    double pooled_auc = 0.0;
    double pooled_logloss = 0.0;
    std::vector<memory::UpdateReport> memory_reports;

    double mean_auc_last(std::size_t k) const {
        if (rows.empty()) return 0.0;
        const std::size_t n = std::min(k, rows.size());
        double s = 0.0;
        for (std::size_t i = rows.size() - n; i < rows.size(); ++i) s += rows[i].auc;
        return s / static_cast<double>(n);
    }
};

// ---------------------------------------------------------------------------
// COLF state machine

struct ColfState {
    std::shared_ptr<const nn::ModelParams> g;
    model::ModularPair f;
    MemoryStore memory;
    memory::SnapshotMap snapshots;
    nn::OptimizerState base_opt;
    int day = 0;
    // Partition held back one day under the no_new ablation.
    std::optional<DayPartition> pending;
};

inline ColfState init_colf(std::size_t context_fields, const StrategyConfig& cfg) {
    ColfState st;
    st.g = std::make_shared<const nn::ModelParams>(model::make_model(context_fields, cfg.model, cfg.seed));
    st.f = model::spawn_head(st.g);
    st.base_opt = nn::OptimizerState(cfg.base_hyper.optimizer);
    return st;
}

inline nn::TrainHyper day_hyper(nn::TrainHyper h, std::uint64_t seed, int day, std::uint64_t salt) {
    h.seed = derive_seed({h.seed, seed, static_cast<std::uint64_t>(day), salt});
    return h;
}

using TraceObserver = std::function<void(int day, const memory::UpdateTrace&, const memory::UpdateReport&)>;

// One day of COLF: base update, memory population, head training, snapshot.
// The caller has already scored f_{t-1} on the day's data.
inline memory::UpdateReport step_colf(ColfState& st, const DayPartition& data, const StrategyConfig& cfg,
                                      const TraceObserver& observer = {}) {
    if (data.day != st.day + 1) {
        throw StateError("step_colf: expected day " + std::to_string(st.day + 1) + ", got " + std::to_string(data.day));
    }
    const auto& ab = cfg.ablations;

    // Base model on the new day only.
    {
        auto g = *st.g;
        model::register_ids(g, data.samples);
        g = model::update_base(std::move(g), data, day_hyper(cfg.base_hyper, cfg.seed, data.day, 1), &st.base_opt);
        st.g = std::make_shared<const nn::ModelParams>(std::move(g));
    }

    // Memory population. f_{t-1} is the snapshot of day t-1.
    memory::UpdateSwitches sw{!ab.no_old_discard, !ab.no_relevant, true};
    memory::PartitionScores scores;
    if (sw.discard_old && !st.memory.empty()) {
        try {
            scores = memory::score_partitions(st.snapshots, st.memory, st.day, data, cfg.policy.criterion);
        } catch (const UndefinedMetricError&) {
            sw.discard_old = false;
        }
    }
    const DayPartition* to_append = &data;
    if (ab.no_new) to_append = st.pending ? &*st.pending : nullptr;
    memory::UpdateTrace trace;
    auto [mem, report] = memory::update(std::move(st.memory), scores, data, to_append, cfg.policy, sw,
                                        observer ? &trace : nullptr);
    st.memory = std::move(mem);
    if (ab.no_new) st.pending = data;
    if (observer) observer(data.day, trace, report);

    // Inference model.
    if (st.memory.empty()) {
        st.f = model::spawn_head(st.g);
    } else if (ab.no_modular) {
        // Everything shared: the replay pass continues g itself.
        auto g = *st.g;
        const auto exemplars = st.memory.flatten();
        std::vector<double> labels;
        labels.reserve(exemplars.size());
        for (const auto& s : exemplars) labels.push_back(s.label);
        std::vector<double> teacher;
        if (cfg.lambda != 0.0) teacher = model::predict(g, exemplars);
        nn::Objective obj{labels, teacher, cfg.lambda};
        nn::train(g.schema, g.tables, g.head, exemplars, obj, day_hyper(cfg.head_hyper, cfg.seed, data.day, 2),
                  st.base_opt);
        st.g = std::make_shared<const nn::ModelParams>(std::move(g));
        st.f = model::spawn_head(st.g);
    } else {
        st.f = model::train_head_on_memory(model::spawn_head(st.g), st.memory, cfg.lambda,
                                           day_hyper(cfg.head_hyper, cfg.seed, data.day, 2), cfg.share);
    }

    st.day = data.day;
    st.snapshots[st.day] = model::ModelSnapshot{st.day, st.f};
    for (auto it = st.snapshots.begin(); it != st.snapshots.end();) {
        if (it->first != st.day && !st.memory.partitions.contains(it->first)) it = st.snapshots.erase(it);
        else ++it;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Strategies behind a common interface

class Learner {
public:
    virtual ~Learner() = default;
    // Scores a day with the current inference model.
    virtual std::vector<double> predict(const DayPartition& day) const = 0;
    // Reveals the day's labels and updates.
    virtual void observe(const DayPartition& day) = 0;
    virtual std::size_t memory_size() const = 0;
    virtual const std::vector<memory::UpdateReport>& reports() const { return no_reports_; }
    // Latest day whose samples have entered any training input.
    int trained_through() const { return trained_through_; }

protected:
    int trained_through_ = 0;

private:
    std::vector<memory::UpdateReport> no_reports_;
};

class ColfLearner final : public Learner {
public:
    ColfLearner(std::size_t context_fields, StrategyConfig cfg, TraceObserver observer = {})
        : cfg_(std::move(cfg)), state_(init_colf(context_fields, cfg_)), observer_(std::move(observer)) {}

    std::vector<double> predict(const DayPartition& day) const override {
        return model::predict(state_.f, day.samples);
    }

    void observe(const DayPartition& day) override {
        reports_.push_back(step_colf(state_, day, cfg_, observer_));
        trained_through_ = day.day;
    }

    std::size_t memory_size() const override { return state_.memory.total_size(); }
    const std::vector<memory::UpdateReport>& reports() const override { return reports_; }
    const ColfState& state() const { return state_; }

private:
    StrategyConfig cfg_;
    ColfState state_;
    TraceObserver observer_;
    std::vector<memory::UpdateReport> reports_;
};

// Base-model flow shared by the non-COLF strategies.
class BaseFlow {
public:
    BaseFlow(std::size_t context_fields, const StrategyConfig& cfg)
        : g_(std::make_shared<const nn::ModelParams>(model::make_model(context_fields, cfg.model, cfg.seed))),
          opt_(cfg.base_hyper.optimizer) {}

    void update(const DayPartition& day, const StrategyConfig& cfg) {
        auto g = *g_;
        model::register_ids(g, day.samples);
        g = model::update_base(std::move(g), day, day_hyper(cfg.base_hyper, cfg.seed, day.day, 1), &opt_);
        g_ = std::make_shared<const nn::ModelParams>(std::move(g));
    }

    const std::shared_ptr<const nn::ModelParams>& g() const { return g_; }

private:
    std::shared_ptr<const nn::ModelParams> g_;
    nn::OptimizerState opt_;
};

class IncrementalLearner final : public Learner {
public:
    IncrementalLearner(std::size_t context_fields, StrategyConfig cfg)
        : cfg_(std::move(cfg)), base_(context_fields, cfg_) {}

    std::vector<double> predict(const DayPartition& day) const override { return model::predict(*base_.g(), day.samples); }

    void observe(const DayPartition& day) override {
        base_.update(day, cfg_);
        trained_through_ = day.day;
    }

    std::size_t memory_size() const override { return 0; }

private:
    StrategyConfig cfg_;
    BaseFlow base_;
};

// Base flow plus a modular head retrained daily on a strategy-specific pool.
class ReplayLearner : public Learner {
public:
    ReplayLearner(std::size_t context_fields, StrategyConfig cfg)
        : cfg_(std::move(cfg)), base_(context_fields, cfg_), f_(model::spawn_head(base_.g())) {}

    std::vector<double> predict(const DayPartition& day) const override { return model::predict(f_, day.samples); }

    void observe(const DayPartition& day) override {
        base_.update(day, cfg_);
        update_pool(day);
        const auto& ex = exemplars();
        f_ = model::spawn_head(base_.g());
        if (!ex.empty()) {
            f_ = model::train_head(std::move(f_), ex, cfg_.lambda, day_hyper(cfg_.head_hyper, cfg_.seed, day.day, 2),
                                   cfg_.share);
        }
        trained_through_ = day.day;
    }

    std::size_t memory_size() const override { return exemplars().size(); }

protected:
    virtual void update_pool(const DayPartition& day) = 0;
    virtual const std::vector<ClickSample>& exemplars() const = 0;

    StrategyConfig cfg_;

private:
    BaseFlow base_;
    model::ModularPair f_;
};

class SlidingWindowLearner final : public ReplayLearner {
public:
    using ReplayLearner::ReplayLearner;

protected:
    void update_pool(const DayPartition& day) override {
        window_.push_back(day.samples);
        while (window_.size() > cfg_.window) window_.pop_front();
        // Same budget as every other memory strategy: drop oldest days first.
        std::size_t total = 0;
        for (const auto& d : window_) total += d.size();
        while (total > cfg_.policy.cap && window_.size() > 1) {
            total -= window_.front().size();
            window_.pop_front();
        }
        flat_.clear();
        for (const auto& d : window_) flat_.insert(flat_.end(), d.begin(), d.end());
        if (flat_.size() > cfg_.policy.cap) flat_.resize(cfg_.policy.cap);
    }

    const std::vector<ClickSample>& exemplars() const override { return flat_; }

private:
    std::deque<std::vector<ClickSample>> window_;
    std::vector<ClickSample> flat_;
};

class CbrsLearner final : public ReplayLearner {
public:
    CbrsLearner(std::size_t context_fields, StrategyConfig cfg)
        : ReplayLearner(context_fields, std::move(cfg)), pool_(cfg_.policy.cap, cfg_.seed) {}

protected:
    void update_pool(const DayPartition& day) override { pool_.observe(day); }
    const std::vector<ClickSample>& exemplars() const override { return pool_.samples(); }

private:
    baselines::CbrsPool pool_;
};

class AderLearner final : public ReplayLearner {
public:
    AderLearner(std::size_t context_fields, StrategyConfig cfg)
        : ReplayLearner(context_fields, std::move(cfg)), pool_(cfg_.policy.cap, cfg_.seed) {}

protected:
    void update_pool(const DayPartition& day) override { pool_.observe(day); }
    const std::vector<ClickSample>& exemplars() const override { return pool_.samples(); }

private:
    baselines::FrequencyPool pool_;
};

inline std::unique_ptr<Learner> make_learner(std::size_t context_fields, const StrategyConfig& cfg,
                                             TraceObserver observer = {}) {
    cfg.validate();
    switch (cfg.kind) {
    case StrategyKind::colf: return std::make_unique<ColfLearner>(context_fields, cfg, std::move(observer));
    case StrategyKind::incremental: return std::make_unique<IncrementalLearner>(context_fields, cfg);
    case StrategyKind::sliding_window: return std::make_unique<SlidingWindowLearner>(context_fields, cfg);
    case StrategyKind::cbrs: return std::make_unique<CbrsLearner>(context_fields, cfg);
    case StrategyKind::ader_freq: return std::make_unique<AderLearner>(context_fields, cfg);
    }
    throw ConfigError("strategy.kind", "unhandled strategy");
}

// ---------------------------------------------------------------------------
// Runs

struct RunOptions {
    // Wall-clock seconds are non-deterministic; recorded only on request.
    bool record_timings = false;
    TraceObserver observer;
};

inline RunResult run_continual(const stream::ClickStream& s, const StrategyConfig& cfg, const RunOptions& opts = {}) {
    if (s.n_days() < 2) throw InputError("run_continual: stream needs at least two days");
    auto learner = make_learner(s.schema.context_count(), cfg, opts.observer);
    RunResult out;
    out.strategy = cfg.label();
    out.seed = cfg.seed;
    std::vector<double> all_preds, all_labels;
    for (std::size_t k = 0; k < s.days.size(); ++k) {
        const auto& day = s.days[k];
        DayResult row;
        row.day = day.day;
        if (k > 0) {
            if (learner->trained_through() >= day.day) {
                throw StateError("label leakage: model for day " + std::to_string(day.day) + " saw day " +
                                 std::to_string(learner->trained_through()));
            }
            const auto preds = learner->predict(day);
            const auto labels = day.labels();
            try {
                row.auc = eval::auc(preds, labels);
            } catch (const UndefinedMetricError&) {
                row.auc = std::numeric_limits<double>::quiet_NaN();
            }
            row.logloss = eval::logloss(preds, labels);
            all_preds.insert(all_preds.end(), preds.begin(), preds.end());
            all_labels.insert(all_labels.end(), labels.begin(), labels.end());
        }
        const auto t0 = std::chrono::steady_clock::now();
        learner->observe(day);
        const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        if (k > 0) {
            row.memory_size = learner->memory_size();
            row.train_seconds = opts.record_timings ? dt.count() : 0.0;
            out.rows.push_back(row);
        }
    }
    try {
        out.pooled_auc = eval::auc(all_preds, all_labels);
    } catch (const UndefinedMetricError&) {
        out.pooled_auc = std::numeric_limits<double>::quiet_NaN();
    }
    out.pooled_logloss = eval::logloss(all_preds, all_labels);
    out.memory_reports = learner->reports();
    return out;
}

// Applies a run seed to a strategy: model init, shuffling and pool sampling.
inline StrategyConfig seeded(StrategyConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.policy.seed = seed;
    return cfg;
}

// strategies x seeds, each on the stream regenerated with that seed. Results
// are ordered strategy-major regardless of `jobs`.
inline std::vector<RunResult> run_matrix(const stream::DriftConfig& stream_cfg,
                                         const std::vector<StrategyConfig>& strategies,
                                         const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1,
                                         const RunOptions& opts = {}) {
    for (const auto& s : strategies) s.validate();
    std::vector<RunResult> results(strategies.size() * seeds.size());
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        auto cfg = stream_cfg;
        cfg.seed = seeds[si];
        const auto stream = stream::generate_stream(cfg);
        std::atomic<std::size_t> next{0};
        std::mutex err_mu;
        std::exception_ptr err;
        auto worker = [&] {
            for (std::size_t k = next++; k < strategies.size(); k = next++) {
                try {
                    results[k * seeds.size() + si] = run_continual(stream, seeded(strategies[k], seeds[si]), opts);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        };
        const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, strategies.size()));
        if (n_threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        if (err) std::rethrow_exception(err);
    }
    return results;
}

} // namespace colf::continual
