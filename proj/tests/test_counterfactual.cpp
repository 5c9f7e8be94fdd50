#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "edualloc/counterfactual.hpp"
#include "edualloc/population.hpp"

using namespace edualloc;

namespace {

Theta theta_noneduc() {
    Theta t;
    t.theta1 = 0.0218;
    t.alpha_gap = 0.0018;
    t.p1 = 0.3663;
    t.p_fb_d = 0.1124;
    t.p_sb_d = 0.3217;
    t.p_high_aversion = 0.5;
    return t;
}

Theta theta_symmetric(const AbilityDist& dist) {
    Theta t;
    const double p = symmetric_p_child1(dist);
    t.p1 = p;
    t.p_fb_d = p;
    t.p_sb_d = 1.0 - p;
    t.p_high_aversion = 0.5;
    return t;
}

std::vector<HouseholdSpec> template_households(std::int64_t n, std::uint64_t seed) {
    PopulationConfig cfg;
    cfg.n_households = n;
    cfg.seed = seed;
    cfg.q_T_sampler[ParentEduc::None].mean = 18.4;
    cfg.q_T_sampler[ParentEduc::None].sd = 5.0;
    cfg.q_T_sampler[ParentEduc::None].min = 2.0;
    cfg.q_T_sampler[ParentEduc::None].max = 42.0;
    return generate_population(cfg);
}

} // namespace

TEST_CASE("ECDF utilities") {
    GapDistribution a, b;
    a.samples = {0.0, 1.0};
    b.samples = {0.0, 2.0};
    a.finalize();
    b.finalize();
    CHECK(ks_distance(a, a) == 0.0);
    CHECK(ks_distance(a, b) == Catch::Approx(0.5));

    GapDistribution lo, hi;
    lo.samples = {0.0, 0.1, 0.2};
    hi.samples = {5.0, 5.1, 5.2};
    lo.finalize();
    hi.finalize();
    CHECK(ks_distance(lo, hi) == Catch::Approx(1.0));

    GapDistribution sym;
    sym.samples = {-2.0, -1.0, 1.0, 2.0};
    sym.finalize();
    CHECK(symmetry_deviation(sym) == Catch::Approx(0.0));

    GapDistribution empty;
    CHECK_THROWS_AS(ks_distance(a, empty), std::invalid_argument);
}

TEST_CASE("cf1 gap curve") {
    AbilityDist beta{28.82, 28.78};
    std::vector<double> grid;
    for (double a = 0.30; a <= 0.7001; a += 0.005) grid.push_back(a);

    SECTION("no disadvantages cross at one half") {
        Theta t = theta_symmetric(beta);
        const auto r = cf1_gap_curve(t, beta, 20.0, grid);
        REQUIRE(r.crossing_a1.has_value());
        CHECK(*r.crossing_a1 == Catch::Approx(0.5).margin(0.006));
        for (std::size_t i = 0; i + 1 < r.gap_with.size(); ++i) CHECK(r.gap_with[i] <= r.gap_with[i + 1] + 1e-9);
    }

    SECTION("estimated disadvantages need an abler firstborn daughter") {
        Theta t = theta_noneduc();
        const auto r = cf1_gap_curve(t, beta, 20.0, grid);
        REQUIRE(r.crossing_a1.has_value());
        CHECK(*r.crossing_a1 > 0.5);
        REQUIRE(r.crossing_ratio.has_value());
        CHECK(*r.crossing_ratio > 1.0);
        // with-disadvantage curve sits below the no-disadvantage curve
        for (std::size_t i = 0; i < r.gap_with.size(); ++i) CHECK(r.gap_with[i] <= r.gap_without[i] + 1e-9);
        // strictly increasing, so the crossing is unique
        for (std::size_t i = 0; i + 1 < r.gap_with.size(); ++i) CHECK(r.gap_with[i] < r.gap_with[i + 1]);
    }

    SECTION("a grid that misses the crossing reports none") {
        Theta t = theta_noneduc();
        std::vector<double> low{0.30, 0.32, 0.34};
        const auto r = cf1_gap_curve(t, beta, 20.0, low);
        CHECK_FALSE(r.crossing_a1.has_value());
    }

    SECTION("bad grids are rejected") {
        Theta t = theta_noneduc();
        CHECK_THROWS_AS(cf1_gap_curve(t, beta, 20.0, {0.5, 0.4}), std::invalid_argument);
        CHECK_THROWS_AS(cf1_gap_curve(t, beta, 20.0, {0.0, 0.5}), std::invalid_argument);
        CHECK_THROWS_AS(cf1_gap_curve(t, beta, 0.0, {0.4, 0.5}), std::invalid_argument);
    }
}

TEST_CASE("cf2 scenario distributions") {
    AbilityDist beta{28.82, 28.78};
    AbilitySource abilities;
    abilities.dist = beta;
    const auto households = template_households(30000, 2024);
    Theta t = theta_noneduc();

    SECTION("zero policy reproduces the baseline bit for bit") {
        PolicySpec none;
        const auto r = cf2_policy_distributions(t, none, abilities, households, 7);
        REQUIRE(r.policy.samples.size() == r.baseline.samples.size());
        for (std::size_t i = 0; i < r.policy.samples.size(); ++i)
            CHECK(r.policy.samples[i] == r.baseline.samples[i]);
    }

    SECTION("calibrated policy matches the no-disadvantage world") {
        PolicySpec policy;
        policy.calibrated = true;
        const auto r = cf2_policy_distributions(t, policy, abilities, households, 7);
        CHECK(ks_distance(r.policy, r.no_disadvantage) < 0.02);
        // and clearly beats doing nothing
        CHECK(ks_distance(r.policy, r.no_disadvantage) < ks_distance(r.baseline, r.no_disadvantage));
    }

    SECTION("no-disadvantage distribution first-order dominates the baseline") {
        PolicySpec none;
        const auto r = cf2_policy_distributions(t, none, abilities, households, 7);
        CHECK(fosd_gap(r.no_disadvantage, r.baseline) <= 0.01);
        CHECK(r.no_disadvantage.mean() > r.baseline.mean());
        // the extensive fix closes part of the gap
        CHECK(r.extensive_fix.mean() > r.baseline.mean());
        CHECK(r.extensive_fix.mean() < r.no_disadvantage.mean());
    }

    SECTION("no-disadvantage gaps are symmetric around zero") {
        PolicySpec none;
        const auto r = cf2_policy_distributions(theta_symmetric(beta), none, abilities, households, 7);
        CHECK(symmetry_deviation(r.baseline) < 0.02);
        CHECK(std::abs(r.baseline.mean()) <
              2.0 * 21.0 / std::sqrt(static_cast<double>(r.baseline.samples.size())));
    }

    SECTION("firstborn-secondborn panel uses same-gender households") {
        PolicySpec none;
        const auto r =
            cf2_policy_distributions(t, none, abilities, households, 7, GapKind::FirstbornSecondborn);
        CHECK(r.baseline.samples.size() > 10000);
        CHECK(r.baseline.mean() < 0.0);  // firstborn disadvantage
    }

    SECTION("empirical ability pool is accepted") {
        AbilitySource pool;
        pool.dist = beta;
        pool.pool = {0.45, 0.5, 0.55};
        PolicySpec none;
        const auto r = cf2_policy_distributions(t, none, pool, households, 7);
        CHECK(r.baseline.samples.size() > 10000);
    }
}

TEST_CASE("cf3 resource increase") {
    AbilityDist beta{28.82, 28.78};
    AbilitySource abilities;
    abilities.dist = beta;
    const auto households = template_households(20000, 99);
    Theta t = theta_noneduc();

    SECTION("equal endpoints change nothing") {
        const auto r = cf3_resource_increase(t, abilities, households, 9.2, 9.2, 5);
        REQUIRE(r.before.samples.size() == r.after.samples.size());
        for (std::size_t i = 0; i < r.before.samples.size(); ++i)
            CHECK(r.before.samples[i] == r.after.samples[i]);
    }

    SECTION("raising resources widens the daughter-son gap at the estimated theta") {
        const auto r = cf3_resource_increase(t, abilities, households, 9.2, 14.5, 5);
        CHECK(r.mean_after < r.mean_before);
        CHECK(r.mean_before < 0.0);
    }

    SECTION("no disadvantages keeps the mean gap at zero before and after") {
        const auto r = cf3_resource_increase(theta_symmetric(beta), abilities, households, 9.2, 14.5, 5);
        const double se = 21.0 / std::sqrt(static_cast<double>(r.before.samples.size()));
        CHECK(std::abs(r.mean_before) < 2.0 * se);
        CHECK(std::abs(r.mean_after) < 2.0 * se);
    }

    SECTION("cap saturation is reported") {
        const auto r = cf3_resource_increase(t, abilities, households, 9.2, 40.0, 5);
        CHECK(r.capped_share > 0.5);
        CHECK(r.cap_warning);
    }

    SECTION("shrinking resources is rejected") {
        CHECK_THROWS_AS(cf3_resource_increase(t, abilities, households, 14.5, 9.2, 5),
                        std::invalid_argument);
    }
}
