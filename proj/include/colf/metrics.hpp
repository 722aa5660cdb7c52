#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "colf/error.hpp"

namespace colf::eval {

// Tie-aware ROC AUC (Mann-Whitney U with average ranks): the probability that
// a random positive scores above a random negative, ties counting one half.
inline double auc(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw InputError("auc: predictions and labels differ in length");
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a] < preds[b]; });

    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && preds[order[j + 1]] == preds[order[i]]) ++j;
        // Ranks i+1 .. j+1 share their average.
        const double avg_rank = 0.5 * static_cast<double>(i + j + 2);
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] > 0.5) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j + 1;
    }
    const std::size_t n_neg = preds.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc: labels contain a single class");
    const double np = static_cast<double>(n_pos);
    const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

inline constexpr double kLoglossClip = 1e-7;

// Mean negative log-likelihood with predictions clipped to [1e-7, 1 - 1e-7].
inline double logloss(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw InputError("logloss: predictions and labels differ in length");
    if (preds.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double p = std::min(std::max(preds[i], kLoglossClip), 1.0 - kLoglossClip);
        total += labels[i] > 0.5 ? -std::log(p) : -std::log1p(-p);
    }
    return total / static_cast<double>(preds.size());
}

inline double relative_gain(double auc_a, double auc_b) {
    if (auc_b == 0.0) throw InputError("relative_gain: zero baseline");
    return (auc_a - auc_b) / auc_b;
}

// KL(p || q) for two discrete distributions on the same support.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InputError("kl_divergence: supports differ");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) throw InputError("kl_divergence: q has zero mass where p does not");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(kl, 0.0);
}

inline double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
inline double stddev(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

} // namespace colf::eval
