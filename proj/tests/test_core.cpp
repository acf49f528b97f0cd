#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "rtm/core.hpp"

using namespace rtm;

namespace {

CovariateSchema table2_schema() {
    // sparse category codes as they appear in the source records
    CovariateSchema s;
    s.groups = {
        {"COND", {2, 23, 9, 24, 3, 18}},
        {"CITY", {12, 8, 6, 9, 3, 10, 1}},
        {"YEAR", {1, 2, 3, 4, 5, 6}},
        {"SLIM", {7, 8, 6, 10, 14, 9}},
        {"SIGN", {1, 4, 3, 7, 10, 2, 13}},
        {"LGHT", {21, 8, 34, 29, 1, 25, 10, 14}},
        {"BLTE", {6, 18, 14, 7, 8, 13, 4, 9}},
        {"TFFC", {1, 2, 3, 4}},
    };
    s.interactions = CovariateSchema::all_pairs(s.size());
    return s;
}

CovariateSchema small_schema() {
    CovariateSchema s;
    s.groups = {CovariateGroup::contiguous("AAAA", 3), CovariateGroup::contiguous("BBBB", 2),
                CovariateGroup::contiguous("CCCC", 4)};
    s.interactions = CovariateSchema::all_pairs(3);
    return s;
}

std::vector<RoadRecord> random_records(const CovariateSchema& s, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<RoadRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        RoadRecord r;
        r.road_id = "r" + std::to_string(i);
        for (const auto& g : s.groups)
            r.subtype.push_back(std::uniform_int_distribution<int>(1, static_cast<int>(g.cardinality()))(rng));
        r.exposure = std::uniform_real_distribution<double>(0.5, 100.0)(rng);
        r.fatalities = std::uniform_int_distribution<int>(0, 4)(rng);
        out.push_back(r);
    }
    return out;
}

bool same_cells(const std::vector<TypeCell>& a, const std::vector<TypeCell>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j].subtype != b[j].subtype || a[j].fatalities != b[j].fatalities || a[j].exposure != b[j].exposure ||
            a[j].interaction_levels != b[j].interaction_levels || a[j].id != b[j].id)
            return false;
    return true;
}

}  // namespace

TEST(InteractionIndex, RowMajorFlattening) {
    EXPECT_EQ(interaction_index(1, 1, 3, 4), 1);
    EXPECT_EQ(interaction_index(3, 4, 3, 4), 12);
    EXPECT_EQ(interaction_index(2, 3, 3, 4), 7);
}

TEST(InteractionIndex, IsBijective) {
    std::vector<int> seen;
    for (int a = 1; a <= 5; ++a)
        for (int b = 1; b <= 7; ++b) seen.push_back(interaction_index(a, b, 5, 7));
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 35; ++i) EXPECT_EQ(seen[static_cast<std::size_t>(i)], i + 1);
}

TEST(InteractionIndex, RejectsOutOfRange) {
    EXPECT_THROW(interaction_index(0, 1, 3, 4), DomainError);
    EXPECT_THROW(interaction_index(4, 1, 3, 4), DomainError);
    EXPECT_THROW(interaction_index(1, 5, 3, 4), DomainError);
}

TEST(Schema, AllPairsCount) {
    auto s = table2_schema();
    EXPECT_EQ(s.interactions.size(), 28u);
    EXPECT_NO_THROW(s.validate());
    for (std::size_t k = 1; k < 12; ++k) EXPECT_EQ(CovariateSchema::all_pairs(k).size(), k * (k - 1) / 2);
}

TEST(Schema, RejectsBadDefinitions) {
    auto s = small_schema();
    s.groups[1].code = "AAAA";
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_schema();
    s.interactions.push_back({1, 1});
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_schema();
    s.interactions.push_back({0, 7});
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_schema();
    s.interactions.push_back({1, 0});
    EXPECT_THROW(s.validate(), ConfigError);
    s = small_schema();
    s.groups[2].codes = {5};
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Schema, SparseCodesMapToDenseLevels) {
    CovariateGroup g{"SLIM", {0, 25, 30, 35, 45, 99}};
    EXPECT_EQ(g.level_of(25).value(), 2);
    EXPECT_EQ(g.level_of(99).value(), 6);
    EXPECT_FALSE(g.level_of(40).has_value());
    EXPECT_EQ(g.code_of(4), 35);
}

TEST(Aggregate, SumsIdenticalTypes) {
    auto s = small_schema();
    std::vector<RoadRecord> recs{{"a", {1, 2, 3}, 10.0, 1, false, ""}, {"b", {1, 2, 3}, 20.0, 2, false, ""}};
    auto cells = aggregate_cells(recs, s);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].fatalities, 3);
    EXPECT_DOUBLE_EQ(cells[0].exposure, 30.0);
    EXPECT_EQ(cells[0].roads, 2u);
}

TEST(Aggregate, OneGroupDifferenceSplitsCells) {
    auto s = small_schema();
    std::vector<RoadRecord> recs{{"a", {1, 2, 3}, 1.0, 1, false, ""}, {"b", {1, 2, 4}, 1.0, 1, false, ""}};
    EXPECT_EQ(aggregate_cells(recs, s).size(), 2u);
}

TEST(Aggregate, Table2RowsAreSixCells) {
    auto s = table2_schema();
    // COND CITY YEAR SLIM SIGN LGHT BLTE TFFC EXPR
    std::vector<std::vector<long>> raw{{2, 1, 1, 6, 1, 10, 4, 1},  {2, 1, 1, 6, 1, 29, 4, 1},
                                       {2, 1, 1, 6, 13, 29, 6, 1}, {2, 1, 1, 6, 3, 8, 6, 1},
                                       {2, 1, 1, 6, 1, 8, 9, 1},   {2, 1, 1, 6, 1, 14, 18, 1}};
    std::vector<double> expr{256.52, 382.92, 859.79, 3117.68, 3286.61, 193.75};
    std::vector<RoadRecord> recs;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        RoadRecord r{std::to_string(i), {}, expr[i], 1, false, ""};
        for (std::size_t k = 0; k < s.size(); ++k) r.subtype.push_back(s.groups[k].level_of(raw[i][k]).value());
        recs.push_back(r);
    }
    auto cells = aggregate_cells(recs, s);
    EXPECT_EQ(cells.size(), 6u);
    for (const auto& c : cells) EXPECT_EQ(c.interaction_levels.size(), 28u);
}

TEST(Aggregate, ErrorNamesRecordAndGroup) {
    auto s = small_schema();
    std::vector<RoadRecord> recs{{"road-17", {1, 3, 1}, 1.0, 1, false, ""}};
    try {
        aggregate_cells(recs, s);
        FAIL();
    } catch (const DataError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("road-17"), std::string::npos);
        EXPECT_NE(msg.find("BBBB"), std::string::npos);
    }
}

TEST(Aggregate, RejectsNonPositiveExposure) {
    auto s = small_schema();
    std::vector<RoadRecord> recs{{"z", {1, 1, 1}, 0.0, 1, false, ""}};
    EXPECT_THROW(aggregate_cells(recs, s), DataError);
}

TEST(AggregateProperty, PreservesTotalsAndIsLexicographic) {
    auto s = small_schema();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto recs = random_records(s, 200, seed);
        auto cells = aggregate_cells(recs, s);
        long long y = 0, x = 0;
        for (const auto& c : cells) y += c.fatalities;
        for (const auto& r : recs) x += r.fatalities;
        EXPECT_EQ(x, y);
        for (std::size_t j = 1; j < cells.size(); ++j) EXPECT_LT(cells[j - 1].subtype, cells[j].subtype);
    }
}

TEST(AggregateProperty, PermutationInvariant) {
    auto s = small_schema();
    std::mt19937_64 rng(99);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto recs = random_records(s, 150, seed);
        auto base = aggregate_cells(recs, s);
        std::shuffle(recs.begin(), recs.end(), rng);
        EXPECT_TRUE(same_cells(base, aggregate_cells(recs, s)));
    }
}

TEST(AggregateProperty, IdempotentOnAggregatedInput) {
    auto s = small_schema();
    auto cells = aggregate_cells(random_records(s, 300, 5), s);
    std::vector<RoadRecord> again;
    for (const auto& c : cells) again.push_back({"c", c.subtype, c.exposure, c.fatalities, false, ""});
    EXPECT_TRUE(same_cells(cells, aggregate_cells(again, s)));
}

TEST(AggregateProperty, UnitFatalityRoundTrip) {
    auto s = small_schema();
    auto recs = random_records(s, 100, 11);
    for (auto& r : recs) r.exposure = 1.0;
    auto cells = aggregate_cells(recs, s);
    std::vector<RoadRecord> expanded;
    for (const auto& c : cells) {
        if (c.fatalities == 0) {
            for (std::size_t i = 0; i < c.roads; ++i) expanded.push_back({"z", c.subtype, 1.0, 0, false, ""});
            continue;
        }
        // spread the exposure over the unit records so the sum is exact
        double share = c.exposure / static_cast<double>(c.fatalities);
        for (long long i = 0; i < c.fatalities; ++i) expanded.push_back({"u", c.subtype, share, 1, false, ""});
    }
    auto again = aggregate_cells(expanded, s);
    ASSERT_EQ(again.size(), cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
        EXPECT_EQ(again[j].subtype, cells[j].subtype);
        EXPECT_EQ(again[j].fatalities, cells[j].fatalities);
        EXPECT_NEAR(again[j].exposure, cells[j].exposure, 1e-12 * cells[j].exposure);
    }
}
