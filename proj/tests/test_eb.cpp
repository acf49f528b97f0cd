#include <cmath>

#include <gtest/gtest.h>

#include "rtm/eb.hpp"
#include "rtm/sim.hpp"

using namespace rtm;
using namespace rtm::eb;

namespace {

CountHistogram full_table1() { return {{0, 138142}, {1, 632}, {2, 40}, {3, 1}, {4, 1}}; }
CountHistogram selected_table1() { return {{0, 43806}, {1, 405}, {2, 29}, {3, 1}}; }

}  // namespace

TEST(Robbins, Table1Rates) {
    auto h = full_table1();
    EXPECT_NEAR(robbins_estimate(h, 0).rate, 632.0 / 138142.0, 1e-15);
    EXPECT_NEAR(robbins_estimate(h, 0).rate, 0.004575, 0.004575 * 1e-3);
    EXPECT_NEAR(robbins_estimate(h, 1).rate, 0.12658, 0.12658 * 1e-4);
    EXPECT_NEAR(robbins_estimate(h, 2).rate, 0.075, 1e-12);
    EXPECT_NEAR(robbins_estimate(h, 3).rate, 4.0, 1e-12);
    EXPECT_FALSE(robbins_estimate(h, 3).tail_truncated);
    EXPECT_TRUE(robbins_estimate(h, 4).tail_truncated);
}

TEST(Robbins, EmptyNumeratorIsTailTruncated) {
    CountHistogram h{{0, 100}, {1, 0}};
    auto e = robbins_estimate(h, 0);
    EXPECT_EQ(e.rate, 0.0);
    EXPECT_TRUE(e.tail_truncated);
}

TEST(Robbins, UndefinedWithoutRoadsAtX) {
    CountHistogram h{{0, 100}, {2, 3}};
    try {
        robbins_estimate(h, 1);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("x = 1"), std::string::npos);
    }
}

TEST(RobbinsTable, Table1ExpectedFatalities) {
    auto t = expected_fatalities_selected(full_table1(), selected_table1(), 5);
    ASSERT_EQ(t.rows.size(), 4u);
    const double expected[] = {200.41, 51.27, 2.175, 4.0};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(t.rows[i].expected, expected[i], 0.01);
        EXPECT_NEAR(t.rows[i].expected, t.rows[i].rate * static_cast<double>(t.rows[i].selected_roads), 1e-12);
    }
    EXPECT_NEAR(t.total_expected, 257.85, 0.01);
    EXPECT_NEAR(t.per_year(), 51.57, 0.01);
    EXPECT_EQ(t.selected_observed, 405 + 58 + 3);
    EXPECT_TRUE(t.warnings.empty());
}

TEST(RobbinsTable, AllZeroSelection) {
    auto t = expected_fatalities_selected(full_table1(), CountHistogram{}, 5);
    for (const auto& r : t.rows) EXPECT_EQ(r.expected, 0.0);
    EXPECT_EQ(t.total_expected, 0.0);
}

TEST(RobbinsTable, RejectsSelectionLargerThanCity) {
    CountHistogram sel{{1, 700}};
    EXPECT_THROW(expected_fatalities_selected(full_table1(), sel, 5), DataError);
    EXPECT_THROW(expected_fatalities_selected(full_table1(), selected_table1(), 0), DomainError);
}

TEST(RobbinsTable, TailRowIsFlagged) {
    CountHistogram h{{0, 50}, {1, 5}, {2, 1}};
    auto t = expected_fatalities_selected(h, h, 1);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_TRUE(t.rows[2].tail_truncated);
    EXPECT_EQ(t.rows[2].expected, 0.0);
    EXPECT_EQ(t.warnings.size(), 1u);
}

TEST(RobbinsTable, ShiftIdentity) {
    // sum_x (x+1) N_{x+1} equals the total observed fatalities
    auto h = full_table1();
    auto t = expected_fatalities_selected(h, h, 1);
    double shifted = 0.0;
    for (const auto& r : t.rows) shifted += r.rate * static_cast<double>(r.roads);
    EXPECT_NEAR(shifted, static_cast<double>(h.fatalities()), 1e-9);
}

TEST(RobbinsTable, IsotonicOptionRemovesDip) {
    auto t = expected_fatalities_selected(full_table1(), selected_table1(), 5, {.isotonic = true});
    for (std::size_t i = 1; i + 1 < t.rows.size(); ++i) EXPECT_LE(t.rows[i - 1].rate, t.rows[i].rate + 1e-15);
    auto raw = expected_fatalities_selected(full_table1(), selected_table1(), 5);
    EXPECT_GT(raw.rows[1].rate, raw.rows[2].rate);  // the raw estimates keep the dip
}

TEST(RobbinsConvergence, GammaPoissonPosteriorMean) {
    const double shape = 2.0, rate = 2.0;
    sim::CityConfig cfg;
    cfg.population = sim::Population::gamma;
    cfg.gamma_shape = shape;
    cfg.gamma_rate = rate;
    cfg.roads = 1'000'000;
    cfg.seed = 314;
    auto city = sim::generate_city(cfg);
    auto counts = sim::simulate_period(city, {}, {}, 2718);
    auto h = CountHistogram::from_counts(counts);
    for (long long x : {0, 1, 2}) {
        double truth = (shape + static_cast<double>(x)) / (rate + 1.0);
        EXPECT_NEAR(robbins_estimate(h, x).rate, truth, 0.02 * truth) << x;
    }
}

TEST(RobbinsConvergence, HomogeneousCityPerYear) {
    sim::CityConfig cfg;
    cfg.population = sim::Population::point_mass;
    cfg.rate = 0.1;
    cfg.roads = 1'000'000;
    cfg.seed = 5;
    auto city = sim::generate_city(cfg);
    auto h = CountHistogram::from_counts(sim::simulate_period(city, {}, {}, 6));
    auto t = expected_fatalities_selected(h, h, 1);
    EXPECT_NEAR(t.per_year(), 0.1 * 1e6, 0.01 * 0.1 * 1e6);
}
