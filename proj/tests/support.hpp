#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "colf/nn.hpp"
#include "colf/random.hpp"
#include "colf/sample.hpp"
#include "colf/stream.hpp"
#include "oracles.hpp"

namespace colf::test {

inline FeatureSchema small_schema(std::size_t context_fields = 1, std::size_t dim = 4) {
    return FeatureSchema::standard(context_fields, dim);
}

// Random samples over small id ranges, so rows repeat within a batch.
inline std::vector<ClickSample> random_samples(std::size_t n, std::uint64_t seed, int day = 1,
                                               std::size_t context_fields = 1, Id users = 6, Id items = 9) {
    Rng rng(seed);
    std::vector<ClickSample> out(n);
    for (auto& s : out) {
        s.day = day;
        s.user = static_cast<Id>(rng.below(users));
        s.item = static_cast<Id>(rng.below(items));
        for (std::size_t c = 0; c < context_fields; ++c) s.context.push_back(static_cast<Id>(rng.below(4)));
        s.label = rng.bernoulli(0.4) ? 1 : 0;
    }
    return out;
}

inline DayPartition day_of(int day, std::vector<ClickSample> xs) {
    for (auto& s : xs) s.day = day;
    return {day, std::move(xs)};
}

inline stream::DriftConfig tiny_stream(int days = 6, std::uint64_t seed = 3) {
    stream::DriftConfig c;
    c.n_days = days;
    c.n_users = 150;
    c.catalog_size = 200;
    c.impressions_per_day = 1500;
    c.seed = seed;
    return c;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("colf_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Compares against tests/golden/<name>. With COLF_BLESS=1 the file is
// (re)written instead.
inline void expect_golden(const std::string& name, const std::string& actual) {
    const std::filesystem::path path = std::filesystem::path(COLF_GOLDEN_DIR) / name;
    const char* bless = std::getenv("COLF_BLESS");
    if (bless && std::string(bless) == "1") {
        std::ofstream(path, std::ios::binary) << actual;
        return;
    }
    ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << path << " (run with COLF_BLESS=1)";
    EXPECT_EQ(slurp(path), actual) << "golden mismatch: " << name;
}

inline std::string hex_doubles(const std::vector<double>& xs) {
    std::ostringstream out;
    for (double x : xs) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%a\n", x);
        out << buf;
    }
    return out.str();
}

} // namespace colf::test
