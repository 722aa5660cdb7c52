#pragma once

// Flat replay pools used by the comparison strategies.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "colf/error.hpp"
#include "colf/random.hpp"
#include "colf/sample.hpp"

namespace colf::baselines {

// Class-balancing reservoir: fills up to `cap`, then keeps the two label
// classes as balanced as the stream allows.
class CbrsPool {
public:
    CbrsPool(std::size_t cap, std::uint64_t seed) : cap_(cap), rng_(derive_seed({seed, 0xCB25ULL})) {
        if (cap == 0) throw ConfigError("cap", "must be positive");
    }

    void observe(const ClickSample& s) {
        const int c = s.label ? 1 : 0;
        ++seen_[c];
        if (pool_.size() < cap_) {
            push(s);
            return;
        }
        const std::size_t n0 = slots_[0].size(), n1 = slots_[1].size();
        const int largest = n1 > n0 ? 1 : 0;
        const bool c_is_largest = slots_[c].size() == std::max(n0, n1);
        if (!c_is_largest) {
            replace(largest, s);
            return;
        }
        // Reservoir acceptance within the class: m_c / n_c.
        const double accept = static_cast<double>(slots_[c].size()) / static_cast<double>(seen_[c]);
        if (rng_.uniform() < accept) replace(c, s);
    }

    void observe(const DayPartition& d) {
        for (const auto& s : d.samples) observe(s);
    }

    const std::vector<ClickSample>& samples() const { return pool_; }
    std::size_t size() const { return pool_.size(); }
    std::size_t class_count(int c) const { return slots_[c ? 1 : 0].size(); }

private:
    void push(const ClickSample& s) {
        const int c = s.label ? 1 : 0;
        pos_.push_back(slots_[c].size());
        slots_[c].push_back(pool_.size());
        pool_.push_back(s);
    }

    // Overwrites a uniformly chosen member of class `victim` with `s`.
    void replace(int victim, const ClickSample& s) {
        auto& vs = slots_[victim];
        const std::size_t k = rng_.below(vs.size());
        const std::size_t at = vs[k];
        vs[k] = vs.back();
        pos_[vs[k]] = k;
        vs.pop_back();
        const int c = s.label ? 1 : 0;
        pos_[at] = slots_[c].size();
        slots_[c].push_back(at);
        pool_[at] = s;
    }

    std::size_t cap_;
    Rng rng_;
    std::vector<ClickSample> pool_;
    std::array<std::vector<std::size_t>, 2> slots_;
    std::vector<std::size_t> pos_;
    std::array<std::uint64_t, 2> seen_{0, 0};
};

inline CbrsPool cbrs_update(CbrsPool pool, const DayPartition& data) {
    pool.observe(data);
    return pool;
}

// Frequency-weighted pool: after each day, keeps `cap` exemplars drawn without
// replacement from (pool + new day) with weight = cumulative historical
// frequency of the exemplar's item.
class FrequencyPool {
public:
    FrequencyPool(std::size_t cap, std::uint64_t seed) : cap_(cap), seed_(seed) {
        if (cap == 0) throw ConfigError("cap", "must be positive");
    }

    void observe(const DayPartition& data) {
        for (const auto& s : data.samples) ++history_[s.item];
        std::vector<ClickSample> candidates = std::move(pool_);
        candidates.insert(candidates.end(), data.samples.begin(), data.samples.end());
        if (candidates.size() <= cap_) {
            pool_ = std::move(candidates);
            return;
        }
        // Efraimidis-Spirakis: the cap largest keys log(u) / w form a weighted
        // sample without replacement.
        Rng rng(derive_seed({seed_, static_cast<std::uint64_t>(data.day), 0xADE2ULL}));
        std::vector<std::pair<double, std::size_t>> keys(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const double w = static_cast<double>(history_[candidates[i].item]);
            keys[i] = {std::log(rng.uniform_open()) / w, i};
        }
        std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(cap_), keys.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
        std::vector<std::size_t> chosen(cap_);
        for (std::size_t k = 0; k < cap_; ++k) chosen[k] = keys[k].second;
        std::sort(chosen.begin(), chosen.end());
        pool_.clear();
        pool_.reserve(cap_);
        for (auto i : chosen) pool_.push_back(std::move(candidates[i]));
    }

    const std::vector<ClickSample>& samples() const { return pool_; }
    std::size_t size() const { return pool_.size(); }
    std::size_t history(Id item) const {
        auto it = history_.find(item);
        return it == history_.end() ? 0 : it->second;
    }

private:
    std::size_t cap_;
    std::uint64_t seed_;
    std::vector<ClickSample> pool_;
    std::unordered_map<Id, std::size_t> history_;
};

inline FrequencyPool ader_freq_update(FrequencyPool pool, const DayPartition& data) {
    pool.observe(data);
    return pool;
}

} // namespace colf::baselines
