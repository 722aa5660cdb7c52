#pragma once

// Synthetic non-stationary click stream. Each day the active catalog churns,
// the ground-truth weight vector takes a random-walk step on the unit sphere
// and item popularity ranks drift; impressions are then sampled and labelled
// from the day's click function
//
//   p(click | u, v, c) = sigmoid(a * <w_t, phi(u, v, c)> + b),
//   phi(u, v, c) = q_v + p_u * q_v + sum_k r_{c_k}    (elementwise product)
//
// with (a, b) calibrated once on day 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "colf/error.hpp"
#include "colf/metrics.hpp"
#include "colf/model.hpp"
#include "colf/nn.hpp"
#include "colf/random.hpp"
#include "colf/sample.hpp"

namespace colf::stream {

struct DriftConfig {
    int n_days = 30;
    std::size_t n_users = 2000;
    std::size_t catalog_size = 3000;
    double churn_rate = 0.03;
    std::size_t impressions_per_day = 50000;
    std::size_t latent_dim = 8;
    double drift_step = 0.05;
    double popularity_skew = 0.8;
    double base_ctr = 0.10;
    std::uint64_t seed = 1;
    std::size_t context_fields = 1;
    std::size_t context_cardinality = 8;
    // Per-day random-walk step of each item's log-popularity score.
    double rank_drift = 0.1;
    // Standard deviation of the ground-truth logit on day 1.
    double signal_scale = 2.0;

    void validate() const {
        if (n_days < 1) throw ConfigError("n_days", "must be at least 1");
        if (n_users == 0) throw ConfigError("n_users", "must be positive");
        if (catalog_size == 0) throw ConfigError("catalog_size", "must be positive");
        if (!(churn_rate >= 0.0 && churn_rate <= 1.0)) throw ConfigError("churn_rate", "must lie in [0, 1]");
        if (impressions_per_day == 0) throw ConfigError("impressions_per_day", "must be positive");
        if (latent_dim == 0) throw ConfigError("latent_dim", "must be positive");
        if (!(drift_step >= 0.0)) throw ConfigError("drift_step", "must be non-negative");
        if (!(popularity_skew >= 0.0)) throw ConfigError("popularity_skew", "must be non-negative");
        if (!(base_ctr > 0.0 && base_ctr < 1.0)) throw ConfigError("base_ctr", "must lie in (0, 1)");
        if (context_fields > 0 && context_cardinality == 0) {
            throw ConfigError("context_cardinality", "must be positive when context fields exist");
        }
        if (!(rank_drift >= 0.0)) throw ConfigError("rank_drift", "must be non-negative");
        if (!(signal_scale > 0.0)) throw ConfigError("signal_scale", "must be positive");
    }

    bool operator==(const DriftConfig&) const = default;
};

// Days in ascending order plus, for generated streams, the active catalog of
// every day (sorted ids). Streams read from disk carry no catalog trace.
struct ClickStream {
    FeatureSchema schema;
    std::vector<DayPartition> days;
    std::vector<std::vector<Id>> active_items;

    std::size_t n_days() const { return days.size(); }

    const DayPartition& day(int d) const {
        if (d < first_day() || d > last_day()) {
            throw InputError("day " + std::to_string(d) + " outside stream range");
        }
        return days[static_cast<std::size_t>(d - first_day())];
    }

    int first_day() const { return days.empty() ? 1 : days.front().day; }
    int last_day() const { return days.empty() ? 0 : days.back().day; }

    std::size_t total_samples() const {
        std::size_t n = 0;
        for (const auto& d : days) n += d.size();
        return n;
    }
};

// Ground-truth world: latents, active catalog, drifting weight vector.
class WorldState {
public:
    explicit WorldState(const DriftConfig& cfg)
        : cfg_(cfg), rng_(derive_seed({cfg.seed, 0x3031ULL})) {
        cfg.validate();
        const std::size_t d = cfg.latent_dim;
        user_latent_.resize(cfg.n_users * d);
        for (auto& x : user_latent_) x = rng_.normal();
        context_latent_.resize(cfg.context_fields * cfg.context_cardinality * d);
        for (auto& x : context_latent_) x = rng_.normal();
        for (std::size_t i = 0; i < cfg.catalog_size; ++i) active_.push_back(new_item());
        w_.resize(d);
        for (auto& x : w_) x = rng_.normal();
        normalize(w_);
    }

    int day() const { return day_; }
    const std::vector<double>& weights() const { return w_; }

    std::vector<Id> active_ids() const {
        std::vector<Id> ids(active_.begin(), active_.end());
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    // Moves the world to the next day: churn, weight drift, popularity drift.
    void advance() {
        ++day_;
        const auto n_replace = static_cast<std::size_t>(std::floor(cfg_.churn_rate * static_cast<double>(active_.size())));
        // Partial Fisher-Yates picks n_replace distinct catalog slots.
        std::vector<std::size_t> slots(active_.size());
        std::iota(slots.begin(), slots.end(), std::size_t{0});
        for (std::size_t k = 0; k < n_replace; ++k) {
            const std::size_t j = k + rng_.below(slots.size() - k);
            std::swap(slots[k], slots[j]);
            active_[slots[k]] = new_item();
        }
        if (cfg_.drift_step > 0.0) {
            for (auto& x : w_) x += cfg_.drift_step * rng_.normal();
            normalize(w_);
        }
        for (auto id : active_) item_score_[id] += cfg_.rank_drift * rng_.normal();
    }

    // Raw (uncalibrated) score <w, phi(u, v, c)>.
    double raw_score(const ClickSample& s) const {
        const std::size_t d = cfg_.latent_dim;
        const double* pu = user_latent_.data() + s.user * d;
        const double* qv = item_latent_.at(s.item).data();
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            double phi = qv[k] + pu[k] * qv[k];
            for (std::size_t c = 0; c < s.context.size(); ++c) {
                phi += context_latent_[(c * cfg_.context_cardinality + s.context[c]) * d + k];
            }
            acc += w_[k] * phi;
        }
        return acc;
    }

    // Draws the day's impressions (unlabelled).
    std::vector<ClickSample> sample_impressions() {
        // Popularity ranking: higher score ranks first, ties by id.
        std::vector<Id> ranked(active_.begin(), active_.end());
        std::sort(ranked.begin(), ranked.end(), [&](Id a, Id b) {
            const double sa = item_score_.at(a), sb = item_score_.at(b);
            return sa != sb ? sa > sb : a < b;
        });
        std::vector<double> cdf(ranked.size());
        double total = 0.0;
        for (std::size_t r = 0; r < ranked.size(); ++r) {
            total += std::pow(static_cast<double>(r + 1), -cfg_.popularity_skew);
            cdf[r] = total;
        }
        std::vector<ClickSample> out;
        out.reserve(cfg_.impressions_per_day);
        for (std::size_t n = 0; n < cfg_.impressions_per_day; ++n) {
            ClickSample s;
            s.day = day_;
            s.user = static_cast<Id>(rng_.below(cfg_.n_users));
            const double u = rng_.uniform() * total;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            if (it == cdf.end()) --it;
            s.item = ranked[static_cast<std::size_t>(it - cdf.begin())];
            s.context.resize(cfg_.context_fields);
            for (auto& c : s.context) c = static_cast<Id>(rng_.below(cfg_.context_cardinality));
            out.push_back(std::move(s));
        }
        return out;
    }

    Rng& rng() { return rng_; }

private:
    static void normalize(std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0) {
            for (auto& x : v) x /= n;
        }
    }

    Id new_item() {
        const Id id = next_item_++;
        std::vector<double> q(cfg_.latent_dim);
        for (auto& x : q) x = rng_.normal();
        item_latent_.emplace(id, std::move(q));
        item_score_.emplace(id, rng_.normal());
        return id;
    }

    DriftConfig cfg_;
    Rng rng_;
    int day_ = 1;
    Id next_item_ = 0;
    std::vector<double> user_latent_;
    std::vector<double> context_latent_;
    std::unordered_map<Id, std::vector<double>> item_latent_;
    std::unordered_map<Id, double> item_score_;
    std::vector<Id> active_;
    std::vector<double> w_;
};

// Mean of sigmoid(a * s + b) over scores; used to solve for b.
inline double mean_click_prob(std::span<const double> raw, double a, double b) {
    double m = 0.0;
    for (double s : raw) m += nn::sigmoid(a * s + b);
    return m / static_cast<double>(raw.size());
}

inline std::pair<double, double> calibrate(std::span<const double> raw, double signal_scale, double base_ctr) {
    const double mu = eval::mean(raw);
    double var = 0.0;
    for (double s : raw) var += (s - mu) * (s - mu);
    var /= static_cast<double>(raw.size());
    const double a = var > 0.0 ? signal_scale / std::sqrt(var) : 0.0;
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mean_click_prob(raw, a, mid) < base_ctr) lo = mid;
        else hi = mid;
    }
    return {a, 0.5 * (lo + hi)};
}

inline ClickStream generate_stream(const DriftConfig& cfg) {
    cfg.validate();
    WorldState world(cfg);
    ClickStream out;
    out.schema = FeatureSchema::standard(cfg.context_fields, 8);
    Rng label_rng(derive_seed({cfg.seed, 0x1abe1ULL}));
    double a = 0.0, b = 0.0;
    for (int t = 1; t <= cfg.n_days; ++t) {
        if (t > 1) world.advance();
        auto samples = world.sample_impressions();
        std::vector<double> raw(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) raw[i] = world.raw_score(samples[i]);
        if (t == 1) std::tie(a, b) = calibrate(raw, cfg.signal_scale, cfg.base_ctr);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            samples[i].label = label_rng.bernoulli(nn::sigmoid(a * raw[i] + b)) ? 1 : 0;
        }
        out.days.push_back({t, std::move(samples)});
        out.active_items.push_back(world.active_ids());
    }
    return out;
}

namespace detail {

inline void check_day(const ClickStream& s, int d) {
    if (d < s.first_day() || d > s.last_day()) {
        throw InputError("day " + std::to_string(d) + " outside stream range [" + std::to_string(s.first_day()) +
                         ", " + std::to_string(s.last_day()) + "]");
    }
}

// Active catalog for a day, falling back to the items observed that day.
inline std::vector<Id> item_set(const ClickStream& s, int d) {
    const auto k = static_cast<std::size_t>(d - s.first_day());
    if (k < s.active_items.size()) return s.active_items[k];
    std::vector<Id> ids;
    for (const auto& x : s.day(d).samples) ids.push_back(x.item);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

} // namespace detail

// Fraction of items active on `day` that were not active on `base_day`.
inline double new_item_fraction(const ClickStream& s, int base_day, int day) {
    detail::check_day(s, base_day);
    detail::check_day(s, day);
    if (base_day > day) throw InputError("new_item_fraction: base_day after day");
    const auto base = detail::item_set(s, base_day);
    const auto cur = detail::item_set(s, day);
    if (cur.empty()) return 0.0;
    std::size_t fresh = 0;
    for (auto id : cur) fresh += !std::binary_search(base.begin(), base.end(), id);
    return static_cast<double>(fresh) / static_cast<double>(cur.size());
}

// KL divergence between additively smoothed item-frequency distributions of
// two days, over the union of items observed on either day.
inline double kl_item_dist(const ClickStream& s, int day_i, int day_j, double smoothing = 1e-3) {
    detail::check_day(s, day_i);
    detail::check_day(s, day_j);
    if (!(smoothing > 0.0)) throw InputError("kl_item_dist: smoothing must be positive");
    std::map<Id, std::pair<double, double>> counts;
    for (const auto& x : s.day(day_i).samples) counts[x.item].first += 1.0;
    for (const auto& x : s.day(day_j).samples) counts[x.item].second += 1.0;
    const double k = static_cast<double>(counts.size());
    const double ni = static_cast<double>(s.day(day_i).size());
    const double nj = static_cast<double>(s.day(day_j).size());
    std::vector<double> p, q;
    p.reserve(counts.size());
    q.reserve(counts.size());
    for (const auto& [id, c] : counts) {
        p.push_back((c.first + smoothing) / (ni + smoothing * k));
        q.push_back((c.second + smoothing) / (nj + smoothing * k));
    }
    return eval::kl_divergence(p, q);
}

struct ProbeHyper {
    model::ModelConfig model;
    nn::TrainHyper train{3, 256, {}, 17};
    std::uint64_t seed = 17;
};

struct ProbePoint {
    int gap = 0;
    double auc = 0.0;
};

// Trains a fresh model on one day and measures how its AUC decays on later days.
inline std::vector<ProbePoint> drift_probe(const ClickStream& s, int train_day, std::span<const int> test_days,
                                           const ProbeHyper& hyper = {}) {
    detail::check_day(s, train_day);
    for (int d : test_days) {
        detail::check_day(s, d);
        if (d <= train_day) throw InputError("drift_probe: test day must follow the training day");
    }
    std::vector<ProbePoint> out;
    if (test_days.empty()) return out;
    auto g = model::make_model(s.schema.context_count(), hyper.model, hyper.seed);
    const auto& train = s.day(train_day);
    model::register_ids(g, train.samples);
    g = model::update_base(std::move(g), train, hyper.train);
    for (int d : test_days) {
        const auto& test = s.day(d);
        const auto preds = model::predict(g, test.samples);
        out.push_back({d - train_day, eval::auc(preds, test.labels())});
    }
    return out;
}

} // namespace colf::stream
