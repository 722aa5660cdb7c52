#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "colf/baselines.hpp"
#include "colf/continual.hpp"
#include "support.hpp"

using namespace colf;
using namespace colf::continual;

namespace {

DayPartition labelled(int day, std::size_t neg, std::size_t pos) {
    DayPartition d{day, {}};
    Id u = 0;
    for (std::size_t k = 0; k < neg; ++k) d.samples.push_back({day, u++, 1, {0}, 0});
    for (std::size_t k = 0; k < pos; ++k) d.samples.push_back({day, u++, 2, {0}, 1});
    return d;
}

StrategyConfig strategy(StrategyKind kind, std::size_t cap = 4000) {
    StrategyConfig c;
    c.kind = kind;
    c.policy.cap = cap;
    c.window = 3;
    return c;
}

} // namespace

TEST(Cbrs, UnderCapacityKeepsEverything) {
    const auto pool = baselines::cbrs_update({100, 1}, labelled(1, 50, 50));
    EXPECT_EQ(pool.size(), 100u);
    EXPECT_EQ(pool.class_count(1), 50u);
}

TEST(Cbrs, MinorityNeverEvicted) {
    const auto pool = baselines::cbrs_update({100, 1}, labelled(1, 990, 10));
    EXPECT_EQ(pool.size(), 100u);
    EXPECT_EQ(pool.class_count(1), 10u);
    EXPECT_EQ(pool.class_count(0), 90u);
}

TEST(Cbrs, BalancesWhenMinorityIsPlentiful) {
    auto d = labelled(1, 900, 0);
    const auto later = labelled(1, 0, 300);
    d.samples.insert(d.samples.end(), later.samples.begin(), later.samples.end());
    const auto pool = baselines::cbrs_update({100, 3}, d);
    EXPECT_EQ(pool.class_count(0), 50u);
    EXPECT_EQ(pool.class_count(1), 50u);
}

TEST(Cbrs, SameSeedSamePool) {
    const auto d = test::day_of(1, test::random_samples(500, 2));
    EXPECT_EQ(baselines::cbrs_update({60, 4}, d).samples(), baselines::cbrs_update({60, 4}, d).samples());
    EXPECT_NE(baselines::cbrs_update({60, 4}, d).samples(), baselines::cbrs_update({60, 5}, d).samples());
}

TEST(AderFreq, EqualFrequenciesKeepMinCapAvailable) {
    DayPartition d{1, {}};
    for (Id i = 0; i < 50; ++i) d.samples.push_back({1, i, i, {0}, 0});
    EXPECT_EQ(baselines::ader_freq_update({80, 1}, d).size(), 50u);
    EXPECT_EQ(baselines::ader_freq_update({20, 1}, d).size(), 20u);
}

TEST(AderFreq, EqualFrequenciesSelectUniformly) {
    DayPartition d{1, {}};
    for (Id i = 0; i < 10; ++i) d.samples.push_back({1, i, i, {0}, 0});
    std::map<Id, int> hits;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const auto pool = baselines::ader_freq_update({5, seed}, d);
        for (const auto& s : pool.samples()) ++hits[s.item];
    }
    for (const auto& [item, n] : hits) EXPECT_NEAR(n / 2000.0, 0.5, 0.05) << "item " << item;
}

TEST(AderFreq, FrequentItemIsOverrepresented) {
    // Item 0 is ten times as frequent as each of the other twenty items.
    DayPartition d{1, {}};
    Id u = 0;
    for (int k = 0; k < 100; ++k) d.samples.push_back({1, u++, 0, {0}, 0});
    for (Id item = 1; item <= 20; ++item) {
        for (int k = 0; k < 10; ++k) d.samples.push_back({1, u++, item, {0}, 0});
    }
    const double candidate_share = 100.0 / 300.0;
    double share = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto pool = baselines::ader_freq_update({60, seed}, d);
        double n = 0.0;
        for (const auto& s : pool.samples()) n += s.item == 0;
        share += n / static_cast<double>(pool.size()) / 5.0;
    }
    EXPECT_GT(share, candidate_share);
}

TEST(AderFreq, SameSeedSamePool) {
    const auto d = test::day_of(1, test::random_samples(300, 2, 1, 1, 10, 30));
    EXPECT_EQ(baselines::ader_freq_update({50, 4}, d).samples(), baselines::ader_freq_update({50, 4}, d).samples());
}

TEST(StrategyConfig, AblationsOnlyForColf) {
    auto c = strategy(StrategyKind::incremental);
    c.ablations.no_new = true;
    EXPECT_THROW(c.validate(), ConfigError);
    const auto s = stream::generate_stream(test::tiny_stream(2));
    EXPECT_THROW(run_continual(s, c), ConfigError);
}

TEST(StrategyConfig, Labels) {
    auto c = strategy(StrategyKind::colf);
    c.ablations.no_relevant = true;
    EXPECT_EQ(c.label(), "colf-no_relevant");
    c.name = "x";
    EXPECT_EQ(c.label(), "x");
}

TEST(RunContinual, NeedsTwoDays) {
    const auto s = stream::generate_stream(test::tiny_stream(1));
    EXPECT_THROW(run_continual(s, strategy(StrategyKind::colf)), InputError);
}

TEST(RunContinual, OneRowPerEvaluatedDay) {
    const auto s = stream::generate_stream(test::tiny_stream(5));
    for (auto kind : {StrategyKind::colf, StrategyKind::incremental, StrategyKind::sliding_window, StrategyKind::cbrs,
                      StrategyKind::ader_freq}) {
        const auto r = run_continual(s, strategy(kind, 2000));
        ASSERT_EQ(r.rows.size(), 4u);
        for (std::size_t k = 0; k < r.rows.size(); ++k) {
            EXPECT_EQ(r.rows[k].day, static_cast<int>(k) + 2);
            EXPECT_GE(r.rows[k].auc, 0.0);
            EXPECT_LE(r.rows[k].auc, 1.0);
            EXPECT_GT(r.rows[k].logloss, 0.0);
            EXPECT_EQ(r.rows[k].train_seconds, 0.0);
            if (kind != StrategyKind::incremental) {
                EXPECT_LE(r.rows[k].memory_size, 2000u);
                EXPECT_GT(r.rows[k].memory_size, 0u);
            } else {
                EXPECT_EQ(r.rows[k].memory_size, 0u);
            }
        }
    }
}

TEST(RunContinual, Deterministic) {
    const auto s = stream::generate_stream(test::tiny_stream(5));
    for (auto kind : {StrategyKind::colf, StrategyKind::cbrs}) {
        const auto a = run_continual(s, strategy(kind));
        const auto b = run_continual(s, strategy(kind));
        EXPECT_EQ(a.rows, b.rows);
        EXPECT_EQ(a.pooled_auc, b.pooled_auc);
    }
}

TEST(RunContinual, TimingsOnlyOnRequest) {
    const auto s = stream::generate_stream(test::tiny_stream(3));
    RunOptions opts;
    opts.record_timings = true;
    const auto r = run_continual(s, strategy(StrategyKind::incremental), opts);
    for (const auto& row : r.rows) EXPECT_GT(row.train_seconds, 0.0);
}

TEST(RunContinual, PredictionsPrecedeTraining) {
    // Corrupting the labels of day t must not change the score recorded for day t.
    auto s = stream::generate_stream(test::tiny_stream(4));
    const auto base = run_continual(s, strategy(StrategyKind::colf));
    for (auto& x : s.days[2].samples) x.label = 1 - x.label;
    const auto flipped = run_continual(s, strategy(StrategyKind::colf));
    EXPECT_EQ(flipped.rows[0], base.rows[0]);
    // Day 3 is scored by a model that never saw day 3: AUC flips, logloss changes.
    EXPECT_NEAR(flipped.rows[1].auc, 1.0 - base.rows[1].auc, 1e-12);
    EXPECT_NE(flipped.rows[2].auc, base.rows[2].auc);
}

TEST(StepColf, FirstDayFromEmptyMemory) {
    const auto s = stream::generate_stream(test::tiny_stream(2));
    auto cfg = strategy(StrategyKind::colf);
    auto st = init_colf(1, cfg);
    const auto report = step_colf(st, s.day(1), cfg);
    EXPECT_EQ(st.memory.days(), std::vector<int>{1});
    EXPECT_EQ(report.total_size, s.day(1).size());
    EXPECT_EQ(st.day, 1);
    EXPECT_NE(st.f.head, st.g->head);
    EXPECT_EQ(st.snapshots.size(), 1u);
    EXPECT_THROW(step_colf(st, s.day(1), cfg), StateError);
}

TEST(StepColf, SnapshotsCoverMemoryDaysAndLatest) {
    const auto s = stream::generate_stream(test::tiny_stream(6));
    auto cfg = strategy(StrategyKind::colf, 2500);
    auto st = init_colf(1, cfg);
    for (const auto& d : s.days) {
        step_colf(st, d, cfg);
        std::set<int> expect{st.day};
        for (int day : st.memory.days()) expect.insert(day);
        std::set<int> got;
        for (const auto& [day, snap] : st.snapshots) got.insert(day);
        EXPECT_EQ(got, expect);
    }
}

TEST(StepColf, NoNewDelaysAppendByOneDay) {
    const auto s = stream::generate_stream(test::tiny_stream(3));
    auto cfg = strategy(StrategyKind::colf, 100000);
    cfg.ablations.no_new = true;
    cfg.policy.epsilon = 1e9;
    auto st = init_colf(1, cfg);
    step_colf(st, s.day(1), cfg);
    EXPECT_TRUE(st.memory.empty());
    step_colf(st, s.day(2), cfg);
    EXPECT_EQ(st.memory.days(), std::vector<int>{1});
    step_colf(st, s.day(3), cfg);
    EXPECT_EQ(st.memory.days(), (std::vector<int>{1, 2}));
}

TEST(StepColf, NoModularTrainsTheBaseItself) {
    const auto s = stream::generate_stream(test::tiny_stream(2));
    auto cfg = strategy(StrategyKind::colf);
    cfg.ablations.no_modular = true;
    auto st = init_colf(1, cfg);
    step_colf(st, s.day(1), cfg);
    EXPECT_EQ(st.f.base, st.g);
    EXPECT_EQ(st.f.head, st.g->head);

    auto plain = strategy(StrategyKind::colf);
    auto ref = init_colf(1, plain);
    step_colf(ref, s.day(1), plain);
    EXPECT_NE(ref.g->tables, st.g->tables);
}

TEST(StepColf, ModularHeadNeverWritesBase) {
    const auto s = stream::generate_stream(test::tiny_stream(4));
    auto cfg = strategy(StrategyKind::colf);
    auto st = init_colf(1, cfg);
    auto inc = strategy(StrategyKind::incremental);
    auto learner = make_learner(1, inc);
    for (const auto& d : s.days) {
        step_colf(st, d, cfg);
        learner->observe(d);
        // The COLF base flow matches a plain incremental learner exactly.
        EXPECT_EQ(model::predict(*st.g, d.samples), learner->predict(d));
    }
}

TEST(RunMatrix, CountsOrderAndParallelIsolation) {
    const auto cfg = test::tiny_stream(4);
    const std::vector<StrategyConfig> strategies{strategy(StrategyKind::incremental), strategy(StrategyKind::colf)};
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const auto serial = run_matrix(cfg, strategies, seeds, 1);
    const auto parallel = run_matrix(cfg, strategies, seeds, 2);
    ASSERT_EQ(serial.size(), 6u);
    for (std::size_t k = 0; k < serial.size(); ++k) {
        EXPECT_EQ(serial[k].strategy, k < 3 ? "incremental" : "colf");
        EXPECT_EQ(serial[k].seed, seeds[k % 3]);
        EXPECT_EQ(serial[k].rows, parallel[k].rows);
    }
}

TEST(RunMatrix, PropagatesFailures) {
    auto bad = strategy(StrategyKind::colf);
    bad.lambda = -1.0;
    EXPECT_THROW(run_matrix(test::tiny_stream(3), {bad}, {1}), ConfigError);
}

TEST(RunContinual, StationaryStreamShowsNoReplayGain) {
    auto cfg = test::tiny_stream(8);
    cfg.churn_rate = 0.0;
    cfg.drift_step = 0.0;
    cfg.rank_drift = 0.0;
    cfg.impressions_per_day = 4000;
    double diff = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        cfg.seed = seed;
        const auto s = stream::generate_stream(cfg);
        const auto c = run_continual(s, seeded(strategy(StrategyKind::colf, 20000), seed));
        const auto i = run_continual(s, seeded(strategy(StrategyKind::incremental), seed));
        diff += (c.mean_auc_last(100) - i.mean_auc_last(100)) / 3.0;
    }
    EXPECT_LT(std::abs(diff), 0.01);
}
