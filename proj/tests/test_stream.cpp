#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "colf/stream.hpp"
#include "colf/stream_io.hpp"
#include "support.hpp"

using namespace colf;
using namespace colf::stream;

namespace {

double click_rate(const DayPartition& d) {
    double c = 0.0;
    for (const auto& s : d.samples) c += s.label;
    return c / static_cast<double>(d.size());
}

// Two-day stream with a fixed item histogram per day.
ClickStream histogram_stream(const std::vector<std::pair<Id, int>>& day1, const std::vector<std::pair<Id, int>>& day2) {
    ClickStream s;
    s.schema = FeatureSchema::standard(0, 4);
    int d = 1;
    for (const auto* h : {&day1, &day2}) {
        DayPartition p{d, {}};
        for (auto [item, n] : *h) {
            for (int k = 0; k < n; ++k) p.samples.push_back({d, 0, item, {}, 0});
        }
        s.days.push_back(std::move(p));
        ++d;
    }
    return s;
}

} // namespace

TEST(Generate, Deterministic) {
    const auto a = generate_stream(test::tiny_stream());
    const auto b = generate_stream(test::tiny_stream());
    EXPECT_EQ(a.days.size(), b.days.size());
    for (std::size_t k = 0; k < a.days.size(); ++k) EXPECT_EQ(a.days[k].samples, b.days[k].samples);
    EXPECT_EQ(a.active_items, b.active_items);
}

TEST(Generate, ShapeAndDayLabels) {
    const auto cfg = test::tiny_stream(4);
    const auto s = generate_stream(cfg);
    ASSERT_EQ(s.n_days(), 4u);
    for (const auto& d : s.days) {
        EXPECT_EQ(d.size(), cfg.impressions_per_day);
        for (const auto& x : d.samples) {
            EXPECT_EQ(x.day, d.day);
            EXPECT_TRUE(x.label == 0 || x.label == 1);
            EXPECT_LT(x.user, cfg.n_users);
            EXPECT_EQ(x.context.size(), cfg.context_fields);
        }
    }
    for (const auto& a : s.active_items) EXPECT_EQ(a.size(), cfg.catalog_size);
}

TEST(Generate, InvalidConfigRejected) {
    auto c = test::tiny_stream();
    c.churn_rate = 1.5;
    EXPECT_THROW(generate_stream(c), ConfigError);
    c = test::tiny_stream();
    c.base_ctr = 0.0;
    EXPECT_THROW(generate_stream(c), ConfigError);
    c = test::tiny_stream();
    c.drift_step = -0.1;
    EXPECT_THROW(generate_stream(c), ConfigError);
}

TEST(World, WeightsStayUnitNormAndCatalogFixed) {
    auto cfg = test::tiny_stream();
    cfg.drift_step = 0.7;
    cfg.churn_rate = 0.2;
    WorldState w(cfg);
    for (int t = 0; t < 20; ++t) {
        w.advance();
        double n = 0.0;
        for (double x : w.weights()) n += x * x;
        EXPECT_NEAR(n, 1.0, 1e-12);
        EXPECT_EQ(w.active_ids().size(), cfg.catalog_size);
    }
}

TEST(Generate, StationaryConfigKeepsCatalogAndWeights) {
    auto cfg = test::tiny_stream(5);
    cfg.churn_rate = 0.0;
    cfg.drift_step = 0.0;
    WorldState w(cfg);
    const auto ids = w.active_ids();
    const auto wt = w.weights();
    w.advance();
    EXPECT_EQ(w.active_ids(), ids);
    EXPECT_EQ(w.weights(), wt);
    const auto s = generate_stream(cfg);
    for (int d = 2; d <= 5; ++d) EXPECT_EQ(new_item_fraction(s, 1, d), 0.0);
}

TEST(NewItemFraction, ChurnHalfOneStep) {
    auto cfg = test::tiny_stream(2);
    cfg.churn_rate = 0.5;
    const auto s = generate_stream(cfg);
    EXPECT_EQ(new_item_fraction(s, 1, 2), 0.5);
    EXPECT_EQ(new_item_fraction(s, 2, 2), 0.0);
}

TEST(NewItemFraction, RangeChecks) {
    const auto s = generate_stream(test::tiny_stream(3));
    EXPECT_THROW(new_item_fraction(s, 0, 2), InputError);
    EXPECT_THROW(new_item_fraction(s, 1, 4), InputError);
    EXPECT_THROW(new_item_fraction(s, 3, 2), InputError);
}

TEST(NewItemFraction, FallsBackToObservedItems) {
    const auto s = histogram_stream({{1, 2}, {2, 2}}, {{2, 1}, {3, 1}});
    EXPECT_EQ(new_item_fraction(s, 1, 2), 0.5);
}

TEST(KlItemDist, IdentityIsZero) {
    const auto s = generate_stream(test::tiny_stream(2));
    EXPECT_EQ(kl_item_dist(s, 2, 2), 0.0);
}

TEST(KlItemDist, TwoItemFixture) {
    const auto s = histogram_stream({{1, 2000}, {2, 2000}}, {{1, 1000}, {2, 3000}});
    const double expected = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
    EXPECT_NEAR(expected, 0.143841, 1e-6);
    EXPECT_NEAR(kl_item_dist(s, 1, 2, 1e-9), expected, 1e-9);
    EXPECT_THROW(kl_item_dist(s, 1, 2, 0.0), InputError);
}

TEST(DefaultStream, ClickRateNearBase) {
    const DriftConfig cfg;
    const auto s = generate_stream(cfg);
    ASSERT_EQ(s.n_days(), 30u);
    double total = 0.0;
    for (const auto& d : s.days) {
        const double r = click_rate(d);
        EXPECT_NEAR(r, cfg.base_ctr, 0.03) << "day " << d.day;
        total += r;
    }
    const double mean = total / 30.0;
    EXPECT_GE(mean, 0.07);
    EXPECT_LE(mean, 0.13);
    // 1 - 0.97^25 of the catalog is new by gap 25; gap 1 replaces 3%.
    EXPECT_NEAR(new_item_fraction(s, 1, 2), 0.03, 1e-12);
    EXPECT_GE(new_item_fraction(s, 1, 26), 0.4);
}

TEST(DriftProbe, EmptyTestDays) {
    const auto s = generate_stream(test::tiny_stream(3));
    EXPECT_TRUE(drift_probe(s, 1, std::vector<int>{}).empty());
}

TEST(DriftProbe, GapsAndRangeChecks) {
    const auto s = generate_stream(test::tiny_stream(4));
    const std::vector<int> days{2, 4};
    const auto pts = drift_probe(s, 1, days);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].gap, 1);
    EXPECT_EQ(pts[1].gap, 3);
    for (const auto& p : pts) {
        EXPECT_GE(p.auc, 0.0);
        EXPECT_LE(p.auc, 1.0);
    }
    const std::vector<int> bad{1};
    EXPECT_THROW(drift_probe(s, 1, bad), InputError);
    const std::vector<int> out_of_range{9};
    EXPECT_THROW(drift_probe(s, 1, out_of_range), InputError);
}

TEST(StreamIo, RoundTripDefaultStream) {
    const auto s = generate_stream(DriftConfig{});
    std::stringstream buf;
    write_stream(s, buf);
    const auto back = read_stream(buf);
    EXPECT_EQ(back.schema.fields.size(), s.schema.fields.size());
    for (std::size_t f = 0; f < s.schema.fields.size(); ++f) {
        EXPECT_EQ(back.schema.fields[f].name, s.schema.fields[f].name);
        EXPECT_EQ(back.schema.fields[f].kind, s.schema.fields[f].kind);
        EXPECT_EQ(back.schema.fields[f].dim, s.schema.fields[f].dim);
    }
    ASSERT_EQ(back.days.size(), s.days.size());
    for (std::size_t k = 0; k < s.days.size(); ++k) {
        EXPECT_EQ(back.days[k].day, s.days[k].day);
        EXPECT_EQ(back.days[k].samples, s.days[k].samples);
    }
    std::stringstream again;
    write_stream(back, again);
    EXPECT_EQ(again.str(), buf.str());
}

TEST(StreamIo, EmptyFileIsEmptyStream) {
    std::istringstream in("");
    const auto s = read_stream(in);
    EXPECT_EQ(s.n_days(), 0u);
}

TEST(StreamIo, HeaderOnlyHasNoDays) {
    std::istringstream in("colf-stream 1\nschema\tuser:user:8\titem:item:8\n");
    EXPECT_EQ(read_stream(in).n_days(), 0u);
}

namespace {

std::size_t parse_error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        read_stream(in);
    } catch (const ParseError& e) {
        return e.line();
    }
    return 0;
}

const std::string kHead = "colf-stream 1\nschema\tuser:user:8\titem:item:8\tctx_1:context:8\n";

} // namespace

TEST(StreamIo, MalformedLinesNameTheLine) {
    EXPECT_EQ(parse_error_line(kHead + "1\t2\t3\t4\t1\n1\t2\t3\n"), 4u);
    EXPECT_EQ(parse_error_line(kHead + "1\t2\tx\t4\t1\n"), 3u);
    EXPECT_EQ(parse_error_line(kHead + "1\t2\t3\t4\t2\n"), 3u);
    EXPECT_EQ(parse_error_line(kHead + "1\t2\t3\t4,5\t1\n"), 3u);
    EXPECT_EQ(parse_error_line(kHead + "1\t2\t3\t4\t1\n3\t2\t3\t4\t1\n"), 4u);
    EXPECT_EQ(parse_error_line(kHead + "2\t2\t3\t4\t1\n1\t2\t3\t4\t1\n"), 4u);
    EXPECT_EQ(parse_error_line(kHead + "0\t2\t3\t4\t1\n"), 3u);
    EXPECT_EQ(parse_error_line("colf-stream 2\n"), 1u);
    EXPECT_EQ(parse_error_line("colf-stream 1\nschema\tuser:user:8\n"), 2u);
    EXPECT_EQ(parse_error_line("colf-stream 1\nschema\tuser:user:8\titem:bogus:8\n"), 2u);
}

TEST(StreamIo, ErrorMessageMentionsLine) {
    std::istringstream in(kHead + "1\t2\t3\n");
    try {
        read_stream(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}
