#include <sstream>

#include <gtest/gtest.h>

#include "colf/memory.hpp"
#include "colf/metrics.hpp"
#include "colf/model.hpp"
#include "colf/serialize.hpp"
#include "colf/stream.hpp"
#include "support.hpp"

using namespace colf;
using colf::test::random_samples;
using colf::test::small_schema;

namespace {

nn::ModelParams registered(std::uint64_t seed, const std::vector<ClickSample>& xs) {
    auto p = nn::init_params(small_schema(), {8}, seed);
    model::register_ids(p, xs);
    return p;
}

} // namespace

TEST(RegisterIds, KnownIdsAreANoOp) {
    const auto xs = random_samples(20, 1);
    const auto p = registered(1, xs);
    EXPECT_EQ(model::register_new_ids(p, test::day_of(1, xs)), p);
}

TEST(RegisterIds, OneNewItemAddsOneRow) {
    const auto xs = random_samples(20, 1);
    const auto p = registered(1, xs);
    auto extra = xs;
    extra.push_back({1, xs[0].user, 999, xs[0].context, 0});
    const auto q = model::register_new_ids(p, test::day_of(1, extra));
    EXPECT_EQ(q.tables[1].size(), p.tables[1].size() + 1);
    EXPECT_EQ(q.tables[0], p.tables[0]);
    EXPECT_EQ(q.tables[2], p.tables[2]);
}

TEST(RegisterIds, RowValuesIndependentOfOrder) {
    auto a = nn::init_params(small_schema(), {8}, 4);
    auto b = a;
    std::vector<ClickSample> one{{1, 1, 10, {0}, 0}, {1, 2, 20, {1}, 0}};
    std::vector<ClickSample> two{{1, 2, 20, {1}, 0}, {1, 1, 10, {0}, 0}};
    model::register_ids(a, one);
    model::register_ids(b, two);
    for (std::size_t f = 0; f < a.tables.size(); ++f) {
        for (Id id : a.tables[f].ids()) {
            const auto ra = a.tables[f].row(*a.tables[f].find(id));
            const auto rb = b.tables[f].row(*b.tables[f].find(id));
            EXPECT_TRUE(std::equal(ra.begin(), ra.end(), rb.begin()));
        }
    }
}

TEST(UpdateBase, ZeroEpochsIsIdentity) {
    const auto xs = random_samples(50, 2);
    const auto p = registered(3, xs);
    nn::TrainHyper h;
    h.epochs = 0;
    EXPECT_EQ(model::update_base(p, test::day_of(1, xs), h), p);
}

TEST(UpdateBase, EmptyPartitionThrows) {
    const auto p = nn::init_params(small_schema(), {8}, 3);
    EXPECT_THROW(model::update_base(p, DayPartition{1, {}}, {}), InputError);
}

TEST(UpdateBase, SeparableDayIsLearned) {
    // Label is a deterministic function of the item id.
    std::vector<ClickSample> xs;
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const Id item = static_cast<Id>(rng.below(40));
        xs.push_back({1, static_cast<Id>(rng.below(50)), item, {static_cast<Id>(rng.below(4))}, item % 3 == 0 ? 1 : 0});
    }
    const auto p = registered(6, xs);
    nn::TrainHyper h{5, 64, {nn::OptimizerKind::adam, 0.01}, 1};
    const auto g = model::update_base(p, test::day_of(1, xs), h);
    EXPECT_GT(eval::auc(model::predict(g, xs), test::labels_of(xs)), 0.95);
}

TEST(UpdateBase, LossDecreasesOnDriftingDay) {
    const auto s = stream::generate_stream(test::tiny_stream(3, 8));
    const auto& day = s.day(2);
    auto p = nn::init_params(s.schema, {32}, 2);
    model::register_ids(p, day.samples);
    const auto y = day.labels();
    const double before = nn::logloss(model::predict(p, day.samples), y);
    const auto g = model::update_base(p, day, {});
    EXPECT_LT(nn::logloss(model::predict(g, day.samples), y), before);
}

TEST(SpawnHead, PredictsLikeBase) {
    const auto xs = random_samples(40, 3);
    auto g = registered(7, xs);
    g = model::update_base(g, test::day_of(1, xs), {2, 8, {nn::OptimizerKind::adam, 0.05}, 3});
    const auto f = model::spawn_head(g);
    EXPECT_EQ(model::predict(f, xs), model::predict(g, xs));
}

TEST(SpawnHead, HeadMutationLeavesBaseAlone) {
    const auto xs = random_samples(40, 3);
    const auto g = registered(7, xs);
    const auto before = model::predict(g, xs);
    auto f = model::spawn_head(g);
    for (auto& w : f.head.layers[0].weight) w += 1.0;
    EXPECT_EQ(model::predict(*f.base, xs), before);
    EXPECT_NE(model::predict(f, xs), before);
}

TEST(SpawnHead, TwiceIsBitEqual) {
    const auto g = std::make_shared<const nn::ModelParams>(registered(7, random_samples(10, 1)));
    EXPECT_EQ(model::spawn_head(g), model::spawn_head(g));
}

namespace {

struct HeadFixture {
    std::vector<ClickSample> xs = random_samples(400, 12, 1, 1, 30, 40);
    std::shared_ptr<const nn::ModelParams> g;
    MemoryStore memory;

    HeadFixture() {
        auto p = registered(9, xs);
        p = model::update_base(p, test::day_of(1, xs), {1, 32, {nn::OptimizerKind::adam, 0.01}, 1});
        g = std::make_shared<const nn::ModelParams>(p);
        memory = memory::append_new({}, test::day_of(1, xs));
    }
};

} // namespace

TEST(TrainHead, LambdaZeroIsPlainReplayLoss) {
    HeadFixture fx;
    const auto f = model::spawn_head(fx.g);
    EXPECT_NEAR(model::head_objective(f, fx.xs, 0.0), nn::logloss(model::predict(f, fx.xs), test::labels_of(fx.xs)),
                1e-12);
}

TEST(TrainHead, DistillationGradientVanishesWhereHeadMatchesBase) {
    const std::vector<double> y{1.0}, q{0.3};
    const nn::Objective with{y, q, 2.5};
    const nn::Objective without{y};
    EXPECT_EQ(with.dlogit(0.3, 0), without.dlogit(0.3, 0));
}

TEST(TrainHead, CombinedObjectiveDecreases) {
    HeadFixture fx;
    const auto f = model::spawn_head(fx.g);
    const nn::TrainHyper h{2, 32, {nn::OptimizerKind::adam, 0.01}, 4};
    const auto trained = model::train_head_on_memory(f, fx.memory, 1.0, h);
    EXPECT_LT(model::head_objective(trained, fx.xs, 1.0), model::head_objective(f, fx.xs, 1.0));
}

TEST(TrainHead, BaseAndEmbeddingsUntouched) {
    HeadFixture fx;
    const nn::ModelParams snapshot = *fx.g;
    auto f = model::spawn_head(fx.g);
    for (int round = 0; round < 3; ++round) {
        f = model::train_head_on_memory(f, fx.memory, 0.5 * round, {1, 16, {nn::OptimizerKind::adam, 0.05}, 7});
    }
    EXPECT_EQ(*fx.g, snapshot);
    EXPECT_EQ(f.tables(), snapshot.tables);
    EXPECT_FALSE(f.tuned_tables.has_value());
    EXPECT_NE(f.head, snapshot.head);
}

TEST(TrainHead, FineTuneCopiesTablesInsteadOfWritingBase) {
    HeadFixture fx;
    const nn::ModelParams snapshot = *fx.g;
    const auto f = model::train_head_on_memory(model::spawn_head(fx.g), fx.memory, 1.0, {},
                                               model::EmbeddingShare::fine_tune);
    EXPECT_EQ(*fx.g, snapshot);
    ASSERT_TRUE(f.tuned_tables.has_value());
    EXPECT_NE(*f.tuned_tables, snapshot.tables);
}

TEST(TrainHead, EmptyMemoryThrows) {
    HeadFixture fx;
    EXPECT_THROW(model::train_head_on_memory(model::spawn_head(fx.g), MemoryStore{}, 1.0, {}), InputError);
}

TEST(Predict, LogisticWithZeroWeightsGivesHalf) {
    auto p = nn::init_logistic(small_schema(), 1);
    for (auto& l : p.head.layers) std::fill(l.weight.begin(), l.weight.end(), 0.0);
    for (double y : model::predict(p, random_samples(10, 2))) EXPECT_EQ(y, 0.5);
    EXPECT_TRUE(p.head.layers.size() == 1);
}

TEST(Predict, UnseenIdsScoredWithRegistrationRow) {
    const auto known = random_samples(30, 1);
    auto p = registered(2, known);
    const std::vector<ClickSample> cold{{1, 500, 501, {2}, 1}};
    model::PredictStats stats;
    const auto before = p;
    const auto y = model::predict(p, cold, &stats);
    EXPECT_EQ(p, before);
    EXPECT_EQ(stats.unseen_lookups, 2u);
    model::register_ids(p, cold);
    EXPECT_EQ(model::predict(p, cold), y);
}

TEST(Predict, GoldenVector) {
    const auto s = stream::generate_stream(test::tiny_stream(2, 21));
    auto g = model::make_model(s.schema.context_count(), {}, 5);
    model::register_ids(g, s.day(1).samples);
    g = model::update_base(g, s.day(1), {1, 256, {}, 5});
    std::vector<ClickSample> probe(s.day(2).samples.begin(), s.day(2).samples.begin() + 32);
    test::expect_golden("predict_vector.txt", test::hex_doubles(model::predict(g, probe)));
}

namespace {

model::ModelSnapshot sample_snapshot(bool tuned) {
    HeadFixture fx;
    auto f = model::train_head_on_memory(model::spawn_head(fx.g), fx.memory, 1.0, {},
                                         tuned ? model::EmbeddingShare::fine_tune : model::EmbeddingShare::frozen);
    return {4, f};
}

} // namespace

TEST(Snapshot, RoundTripIsBitExact) {
    for (bool tuned : {false, true}) {
        const auto s = sample_snapshot(tuned);
        std::stringstream buf;
        io::write_snapshot(buf, s);
        const auto back = io::read_snapshot(buf);
        EXPECT_EQ(back.day, s.day);
        EXPECT_EQ(back.model, s.model);
        EXPECT_EQ(*back.model.base, *s.model.base);
        const auto xs = HeadFixture().xs;
        EXPECT_EQ(model::predict(back.model, xs), model::predict(s.model, xs));
    }
}

TEST(Snapshot, FileRoundTrip) {
    const auto s = sample_snapshot(false);
    const auto path = test::fresh_dir("snapshot");
    std::filesystem::create_directories(path);
    io::save_snapshot((path / "f.bin").string(), s);
    EXPECT_EQ(io::load_snapshot((path / "f.bin").string()).model, s.model);
}

TEST(Snapshot, RejectsTruncationAndBadMagic) {
    const auto s = sample_snapshot(false);
    std::stringstream buf;
    io::write_snapshot(buf, s);
    const auto bytes = buf.str();
    std::istringstream cut(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(io::read_snapshot(cut), InputError);
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream wrong(bad);
    EXPECT_THROW(io::read_snapshot(wrong), InputError);
    std::string version = bytes;
    version[8] = 9;
    std::istringstream future(version);
    try {
        io::read_snapshot(future);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}
