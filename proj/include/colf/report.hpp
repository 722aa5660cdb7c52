#pragma once

// Aggregation of run results across seeds into per-strategy summaries, with
// CSV and aligned-text renderings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "colf/continual.hpp"
#include "colf/error.hpp"
#include "colf/metrics.hpp"

namespace colf::eval {

// Fixed-precision formatting for every data file.
inline std::string fmt(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct DayStats {
    int day = 0;
    std::size_t n = 0;
    double auc_mean = 0.0;
    double auc_std = 0.0;
    double logloss_mean = 0.0;
    double logloss_std = 0.0;
};

struct StrategySummary {
    std::string strategy;
    std::size_t n_seeds = 0;
    std::vector<DayStats> days;
    // Mean and spread over seeds of each seed's last-K-day mean AUC.
    double last_k_mean = 0.0;
    double last_k_std = 0.0;
    double auc_mean = 0.0;
    double pooled_auc = 0.0;
    double pooled_logloss = 0.0;
    // (last_k_mean - baseline) / baseline; empty for the baseline itself.
    std::optional<double> gain;
};

struct SummaryTable {
    std::string baseline;
    std::size_t last_k = 5;
    std::vector<StrategySummary> rows;

    const StrategySummary& at(const std::string& strategy) const {
        for (const auto& r : rows) {
            if (r.strategy == strategy) return r;
        }
        throw InputError("no strategy '" + strategy + "' in summary");
    }
};

namespace detail {

// Mean and sample stddev ignoring NaN entries (days whose AUC is undefined).
inline std::pair<double, double> finite_stats(const std::vector<double>& xs) {
    std::vector<double> v;
    for (double x : xs) {
        if (!std::isnan(x)) v.push_back(x);
    }
    if (v.empty()) return {std::nan(""), std::nan("")};
    return {mean(v), stddev(v)};
}

inline double last_k_auc(const continual::RunResult& r, std::size_t k) {
    std::vector<double> tail;
    for (std::size_t i = r.rows.size() - std::min(k, r.rows.size()); i < r.rows.size(); ++i) {
        tail.push_back(r.rows[i].auc);
    }
    return finite_stats(tail).first;
}

} // namespace detail

// Baseline first, remaining strategies by name.
inline SummaryTable aggregate(std::span<const continual::RunResult> results, const std::string& baseline,
                              std::size_t last_k = 5) {
    if (last_k == 0) throw InputError("aggregate: last_k must be positive");
    std::map<std::string, std::vector<const continual::RunResult*>> by_strategy;
    for (const auto& r : results) by_strategy[r.strategy].push_back(&r);
    if (!by_strategy.contains(baseline)) throw InputError("aggregate: baseline '" + baseline + "' not in results");

    std::vector<std::string> order{baseline};
    for (const auto& [name, runs] : by_strategy) {
        if (name != baseline) order.push_back(name);
    }

    SummaryTable table;
    table.baseline = baseline;
    table.last_k = last_k;
    for (const auto& name : order) {
        auto runs = by_strategy.at(name);
        std::sort(runs.begin(), runs.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
        StrategySummary s;
        s.strategy = name;
        s.n_seeds = runs.size();

        std::map<int, std::pair<std::vector<double>, std::vector<double>>> per_day;
        std::vector<double> tails, all, pooled_auc, pooled_ll;
        for (const auto* r : runs) {
            for (const auto& row : r->rows) {
                per_day[row.day].first.push_back(row.auc);
                per_day[row.day].second.push_back(row.logloss);
                all.push_back(row.auc);
            }
            tails.push_back(detail::last_k_auc(*r, last_k));
            pooled_auc.push_back(r->pooled_auc);
            pooled_ll.push_back(r->pooled_logloss);
        }
        for (const auto& [day, v] : per_day) {
            DayStats d;
            d.day = day;
            d.n = v.first.size();
            std::tie(d.auc_mean, d.auc_std) = detail::finite_stats(v.first);
            std::tie(d.logloss_mean, d.logloss_std) = detail::finite_stats(v.second);
            s.days.push_back(d);
        }
        std::tie(s.last_k_mean, s.last_k_std) = detail::finite_stats(tails);
        s.auc_mean = detail::finite_stats(all).first;
        s.pooled_auc = detail::finite_stats(pooled_auc).first;
        s.pooled_logloss = detail::finite_stats(pooled_ll).first;
        table.rows.push_back(std::move(s));
    }
    const double base = table.rows.front().last_k_mean;
    for (auto& s : table.rows) {
        if (s.strategy != baseline) s.gain = relative_gain(s.last_k_mean, base);
    }
    return table;
}

inline void write_summary_csv(const SummaryTable& t, std::ostream& out) {
    out << "strategy,n_seeds,last_k,auc_last_k_mean,auc_last_k_std,auc_mean,pooled_auc,pooled_logloss,gain_vs_"
        << t.baseline << '\n';
    for (const auto& s : t.rows) {
        out << s.strategy << ',' << s.n_seeds << ',' << t.last_k << ',' << fmt(s.last_k_mean) << ','
            << fmt(s.last_k_std) << ',' << fmt(s.auc_mean) << ',' << fmt(s.pooled_auc) << ','
            << fmt(s.pooled_logloss) << ',' << (s.gain ? fmt(*s.gain) : "") << '\n';
    }
}

inline void write_days_csv(const SummaryTable& t, std::ostream& out) {
    out << "strategy,day,n_seeds,auc_mean,auc_std,logloss_mean,logloss_std\n";
    for (const auto& s : t.rows) {
        for (const auto& d : s.days) {
            out << s.strategy << ',' << d.day << ',' << d.n << ',' << fmt(d.auc_mean) << ',' << fmt(d.auc_std) << ','
                << fmt(d.logloss_mean) << ',' << fmt(d.logloss_std) << '\n';
        }
    }
}

inline void write_summary_text(const SummaryTable& t, std::ostream& out) {
    const std::vector<std::string> head{"strategy", "seeds", "auc@last" + std::to_string(t.last_k), "std",
                                        "auc_mean", "pooled_auc", "pooled_ll", "gain"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& s : t.rows) {
        cells.push_back({s.strategy, std::to_string(s.n_seeds), fmt(s.last_k_mean, 4), fmt(s.last_k_std, 4),
                         fmt(s.auc_mean, 4), fmt(s.pooled_auc, 4), fmt(s.pooled_logloss, 4),
                         s.gain ? fmt(100.0 * *s.gain, 2) + "%" : "-"});
    }
    std::vector<std::size_t> width(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            const std::size_t pad = width[c] - row[c].size();
            // Names left-aligned, numbers right-aligned.
            if (c == 0) out << row[c] << std::string(pad, ' ');
            else out << std::string(pad, ' ') << row[c];
        }
        out << '\n';
    };
    line(head);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    for (const auto& row : cells) line(row);
    out << "gain: relative last-" << t.last_k << "-day AUC gain vs " << t.baseline << '\n';
}

} // namespace colf::eval
