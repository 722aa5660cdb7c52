#pragma once

// Replay-memory population: discard partitions whose inference model has
// fallen behind on the newest day, drop exemplars of items that no longer
// occur, append the newest day, then enforce the size cap.
//
//   M_t = M_{t-1} - M_old - M_irrelevant + M_new

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "colf/error.hpp"
#include "colf/memory_store.hpp"
#include "colf/metrics.hpp"
#include "colf/model.hpp"
#include "colf/random.hpp"
#include "colf/sample.hpp"

namespace colf::memory {

enum class Criterion { auc, neg_logloss };

inline const char* to_string(Criterion c) { return c == Criterion::auc ? "auc" : "neg_logloss"; }

inline Criterion criterion_from_string(const std::string& s) {
    if (s == "auc") return Criterion::auc;
    if (s == "neg_logloss") return Criterion::neg_logloss;
    throw ConfigError("policy.criterion", "unknown criterion '" + s + "'");
}

struct MemoryPolicyConfig {
    double epsilon = 0.003;
    double epsilon_p = 1e-6;
    std::size_t cap = 350000;
    Criterion criterion = Criterion::auc;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("policy.epsilon", "must be positive");
        if (!(epsilon_p >= 0.0)) throw ConfigError("policy.epsilon_p", "must be non-negative");
        if (cap == 0) throw ConfigError("policy.cap", "must be positive");
    }

    bool operator==(const MemoryPolicyConfig&) const = default;
};

// Higher is better for every criterion.
inline double evaluate(Criterion c, std::span<const double> preds, std::span<const double> labels) {
    return c == Criterion::auc ? eval::auc(preds, labels) : -eval::logloss(preds, labels);
}

using SnapshotMap = std::map<int, model::ModelSnapshot>;

struct PartitionScores {
    std::map<int, double> by_day;
    double latest = 0.0;
};

// Criterion score of the snapshot for every memory partition, and of the
// latest inference model (day `latest_day`), on the newest labelled data.
inline PartitionScores score_partitions(const SnapshotMap& snapshots, const MemoryStore& memory, int latest_day,
                                        const DayPartition& eval_data, Criterion criterion = Criterion::auc) {
    auto find = [&](int day) -> const model::ModelSnapshot& {
        auto it = snapshots.find(day);
        if (it == snapshots.end()) throw StateError("no inference snapshot for day " + std::to_string(day));
        return it->second;
    };
    const auto labels = eval_data.labels();
    auto score = [&](const model::ModelSnapshot& s) {
        return evaluate(criterion, model::predict(s.model, eval_data.samples), labels);
    };
    PartitionScores out;
    const auto& latest = find(latest_day);
    out.latest = score(latest);
    for (const auto& [day, samples] : memory.partitions) {
        out.by_day[day] = day == latest_day ? out.latest : score(find(day));
    }
    return out;
}

struct DiscardResult {
    MemoryStore memory;
    std::vector<int> discarded_days;
};

// Removes partition d iff score_latest - scores[d] > epsilon.
inline DiscardResult discard_old(MemoryStore memory, const std::map<int, double>& scores, double score_latest,
                                 double epsilon) {
    DiscardResult out;
    for (auto it = memory.partitions.begin(); it != memory.partitions.end();) {
        auto s = scores.find(it->first);
        if (s == scores.end()) throw StateError("no score for memory partition " + std::to_string(it->first));
        if (score_latest - s->second > epsilon) {
            out.discarded_days.push_back(it->first);
            it = memory.partitions.erase(it);
        } else {
            ++it;
        }
    }
    out.memory = std::move(memory);
    return out;
}

// Maximum-likelihood item frequency of one day. Unseen items receive the
// smoothing mass; observed items share the remaining 1 - smoothing.
class FrequencyEstimator {
public:
    FrequencyEstimator() = default;
    FrequencyEstimator(std::unordered_map<Id, std::size_t> counts, std::size_t total, double smoothing)
        : counts_(std::move(counts)), total_(total), smoothing_(smoothing) {}

    double probability(Id item) const {
        auto it = counts_.find(item);
        if (it == counts_.end()) return smoothing_;
        return (1.0 - smoothing_) * static_cast<double>(it->second) / static_cast<double>(total_);
    }

    std::size_t count(Id item) const {
        auto it = counts_.find(item);
        return it == counts_.end() ? 0 : it->second;
    }

    std::size_t total() const { return total_; }
    std::size_t support() const { return counts_.size(); }
    double smoothing() const { return smoothing_; }

    const std::unordered_map<Id, std::size_t>& counts() const { return counts_; }

private:
    std::unordered_map<Id, std::size_t> counts_;
    std::size_t total_ = 0;
    double smoothing_ = 0.0;
};

inline FrequencyEstimator fit_frequency(const DayPartition& data, double smoothing = 0.0) {
    if (data.empty()) throw InputError("fit_frequency: empty partition");
    if (!(smoothing >= 0.0 && smoothing < 1.0)) throw InputError("fit_frequency: smoothing must lie in [0, 1)");
    std::unordered_map<Id, std::size_t> counts;
    for (const auto& s : data.samples) ++counts[s.item];
    return FrequencyEstimator(std::move(counts), data.size(), smoothing);
}

struct RefreshResult {
    MemoryStore memory;
    std::size_t dropped = 0;
    std::vector<ClickSample> dropped_samples;
};

// Drops every exemplar whose item probability under `estimator` is below
// epsilon_p; partitions left empty are removed.
inline RefreshResult refresh_relevant(MemoryStore memory, const FrequencyEstimator& estimator, double epsilon_p,
                                      bool keep_dropped = false) {
    RefreshResult out;
    for (auto it = memory.partitions.begin(); it != memory.partitions.end();) {
        auto& samples = it->second;
        std::vector<ClickSample> kept;
        kept.reserve(samples.size());
        for (auto& s : samples) {
            if (estimator.probability(s.item) < epsilon_p) {
                ++out.dropped;
                if (keep_dropped) out.dropped_samples.push_back(std::move(s));
            } else {
                kept.push_back(std::move(s));
            }
        }
        if (kept.empty()) {
            it = memory.partitions.erase(it);
        } else {
            samples = std::move(kept);
            ++it;
        }
    }
    out.memory = std::move(memory);
    return out;
}

inline MemoryStore append_new(MemoryStore memory, const DayPartition& data) {
    if (!memory.empty() && data.day <= memory.partitions.rbegin()->first) {
        throw InputError("append_new: day " + std::to_string(data.day) + " does not follow memory day " +
                         std::to_string(memory.partitions.rbegin()->first));
    }
    for (const auto& s : data.samples) {
        if (s.day != data.day) throw InputError("append_new: sample day differs from partition day");
    }
    if (!data.empty()) memory.partitions.emplace(data.day, data.samples);
    return memory;
}

struct CapResult {
    MemoryStore memory;
    std::size_t removed = 0;
};

// Evicts whole partitions oldest-first while over the cap; a single remaining
// partition that is still too large is uniformly subsampled (order kept).
inline CapResult enforce_cap(MemoryStore memory, std::size_t cap, std::uint64_t seed = 0) {
    CapResult out;
    std::size_t total = memory.total_size();
    while (total > cap && memory.partitions.size() > 1) {
        auto oldest = memory.partitions.begin();
        total -= oldest->second.size();
        out.removed += oldest->second.size();
        memory.partitions.erase(oldest);
    }
    if (total > cap && !memory.partitions.empty()) {
        auto& [day, samples] = *memory.partitions.begin();
        std::vector<std::size_t> idx(samples.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(derive_seed({seed, static_cast<std::uint64_t>(day), 0xCA9ULL}));
        for (std::size_t k = 0; k < cap; ++k) std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
        idx.resize(cap);
        std::sort(idx.begin(), idx.end());
        std::vector<ClickSample> kept;
        kept.reserve(cap);
        for (auto i : idx) kept.push_back(std::move(samples[i]));
        out.removed += samples.size() - cap;
        if (kept.empty()) {
            memory.partitions.erase(memory.partitions.begin());
        } else {
            samples = std::move(kept);
        }
    }
    out.memory = std::move(memory);
    return out;
}

struct UpdateReport {
    int day = 0;
    std::size_t n_partitions = 0;
    std::size_t total_size = 0;
    std::vector<int> discarded_days;
    std::size_t dropped_irrelevant = 0;
    std::size_t cap_truncated = 0;

    bool operator==(const UpdateReport&) const = default;
};

// Intermediate sets of one update, for auditing the set algebra.
struct UpdateTrace {
    MemoryStore before;
    MemoryStore discarded_old;
    std::vector<ClickSample> dropped_irrelevant;
    MemoryStore survivors;
    MemoryStore pre_cap;
};

struct UpdateSwitches {
    bool discard_old = true;
    bool refresh_relevant = true;
    bool append_new = true;
};

// One full population step. `scores` must come from score_partitions on the
// same day's data; `to_append` is normally the day's own partition.
inline std::pair<MemoryStore, UpdateReport> update(MemoryStore memory, const PartitionScores& scores,
                                                   const DayPartition& data, const DayPartition* to_append,
                                                   const MemoryPolicyConfig& policy,
                                                   const UpdateSwitches& sw = {}, UpdateTrace* trace = nullptr) {
    policy.validate();
    UpdateReport report;
    report.day = data.day;
    if (trace) trace->before = memory;

    if (sw.discard_old) {
        if (trace) {
            for (const auto& [day, samples] : memory.partitions) {
                auto s = scores.by_day.find(day);
                if (s != scores.by_day.end() && scores.latest - s->second > policy.epsilon) {
                    trace->discarded_old.partitions.emplace(day, samples);
                }
            }
        }
        auto r = discard_old(std::move(memory), scores.by_day, scores.latest, policy.epsilon);
        memory = std::move(r.memory);
        report.discarded_days = std::move(r.discarded_days);
    }
    if (sw.refresh_relevant) {
        auto r = refresh_relevant(std::move(memory), fit_frequency(data), policy.epsilon_p, trace != nullptr);
        memory = std::move(r.memory);
        report.dropped_irrelevant = r.dropped;
        if (trace) trace->dropped_irrelevant = std::move(r.dropped_samples);
    }
    if (trace) trace->survivors = memory;
    if (sw.append_new && to_append) memory = append_new(std::move(memory), *to_append);
    if (trace) trace->pre_cap = memory;

    auto capped = enforce_cap(std::move(memory), policy.cap, derive_seed({policy.seed, static_cast<std::uint64_t>(data.day)}));
    memory = std::move(capped.memory);
    report.cap_truncated = capped.removed;
    report.n_partitions = memory.partitions.size();
    report.total_size = memory.total_size();
    return {std::move(memory), std::move(report)};
}

// Scores the partitions with the retained snapshots, then updates. When the
// criterion is undefined on `data` (single-class day) nothing is discarded.
inline std::pair<MemoryStore, UpdateReport> update(MemoryStore memory, const SnapshotMap& snapshots, int latest_day,
                                                   const DayPartition& data, const MemoryPolicyConfig& policy,
                                                   const UpdateSwitches& sw = {}, UpdateTrace* trace = nullptr) {
    PartitionScores scores;
    UpdateSwitches effective = sw;
    if (sw.discard_old && !memory.empty()) {
        try {
            scores = score_partitions(snapshots, memory, latest_day, data, policy.criterion);
        } catch (const UndefinedMetricError&) {
            effective.discard_old = false;
        }
    }
    return update(std::move(memory), scores, data, &data, policy, effective, trace);
}

} // namespace colf::memory
