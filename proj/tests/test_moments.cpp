#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "edualloc/moments.hpp"
#include "edualloc/population.hpp"

using namespace edualloc;

namespace {

HouseholdOutcome make_hh(const std::string& id, std::vector<std::pair<bool, double>> kids,
                         ParentEduc pe = ParentEduc::None) {
    HouseholdOutcome hh;
    hh.id = id;
    hh.parent_educ = pe;
    int order = 1;
    for (auto [female, years] : kids) hh.children.push_back(ChildOutcome{female, order++, years});
    return hh;
}

} // namespace

TEST_CASE("variance decomposition identity and hand instance") {
    SECTION("identical children collapse everything to zero") {
        std::vector<HouseholdOutcome> pop{make_hh("a", {{true, 8.0}, {false, 8.0}}),
                                          make_hh("b", {{true, 8.0}, {false, 8.0}})};
        const auto st = variance_decomposition(pop);
        CHECK(st.total_var == 0.0);
        CHECK(st.within_var_mean == 0.0);
        CHECK(st.between_var == 0.0);
    }

    SECTION("hand instance {0,10} and {5,5}") {
        std::vector<HouseholdOutcome> pop{make_hh("a", {{true, 0.0}, {false, 10.0}}),
                                          make_hh("b", {{true, 5.0}, {false, 5.0}})};
        const auto st = variance_decomposition(pop);
        // both household means are 5, so all variation is within household a
        CHECK(st.total_var == Catch::Approx(12.5));
        CHECK(st.within_var_mean == Catch::Approx(12.5));
        CHECK(st.between_var == Catch::Approx(0.0).margin(1e-12));
        CHECK(std::abs(st.total_var - st.within_var_mean - st.between_var) < 1e-12);
        CHECK(st.within_share == Catch::Approx(1.0));
    }

    SECTION("identity holds on random populations") {
        std::mt19937_64 gen(321);
        std::uniform_real_distribution<double> years(0.0, 21.0);
        std::uniform_int_distribution<int> nkids(2, 3);
        for (int rep = 0; rep < 100; ++rep) {
            std::vector<HouseholdOutcome> pop;
            const int H = 2 + static_cast<int>(gen() % 40);
            for (int h = 0; h < H; ++h) {
                std::vector<std::pair<bool, double>> kids;
                const int nk = nkids(gen);
                for (int k = 0; k < nk; ++k) kids.push_back({(gen() & 1) != 0, years(gen)});
                pop.push_back(make_hh("h" + std::to_string(h), kids));
            }
            const auto st = variance_decomposition(pop);
            CHECK(std::abs(st.total_var - st.within_var_mean - st.between_var) < 1e-9);
            CHECK(st.within_share >= 0.0);
            CHECK(st.within_share <= 1.0 + 1e-12);
        }
    }

    SECTION("singleton household rejected") {
        std::vector<HouseholdOutcome> pop{make_hh("a", {{true, 3.0}}), make_hh("b", {{true, 1.0}, {false, 2.0}})};
        CHECK_THROWS_AS(variance_decomposition(pop), std::invalid_argument);
    }
}

TEST_CASE("per-household inequality rows") {
    std::vector<HouseholdOutcome> pop{make_hh("a", {{true, 8.0}, {false, 8.0}}),
                                      make_hh("b", {{true, 0.0}, {false, 21.0}}),
                                      make_hh("c", {{true, 3.0}, {false, 6.0}, {true, 9.0}})};
    const auto rows = inequality_stats(pop);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].range == 0.0);
    CHECK(rows[0].sd == 0.0);
    CHECK(rows[1].range == 21.0);
    CHECK(rows[1].sd == Catch::Approx(10.5));
    CHECK(rows[2].range == 6.0);
    CHECK(rows[2].sd == Catch::Approx(std::sqrt(6.0)));
    CHECK(rows[2].qbar == Catch::Approx(6.0));
    CHECK(rows[2].q_T == Catch::Approx(18.0));
}

TEST_CASE("moment vector on a hand dataset") {
    // only-daughters {10,10}; mixed firstborn-daughter {7 daughter, 9 son};
    // plus the cells the vector needs populated
    std::vector<HouseholdOutcome> pop{
        make_hh("dd", {{true, 10.0}, {true, 10.0}}),
        make_hh("ds", {{true, 7.0}, {false, 9.0}}),
        make_hh("ss", {{false, 4.0}, {false, 8.0}}),
        make_hh("dd2", {{true, 10.0}, {true, 0.0}}),   // one educated, firstborn
        make_hh("ds2", {{true, 0.0}, {false, 12.0}}),  // one educated, son
        make_hh("sd2", {{false, 0.0}, {true, 11.0}}),  // one educated, daughter
    };
    const auto mv = compute_moment_vector(pop, Stratum{ParentEduc::None, 2});
    // daughters in only-daughter households: (10+10+10+0)/4 = 7.5; mixed: (7+0+11)/3 = 6
    CHECK(mv.m1 == Catch::Approx(7.5 - 6.0));
    CHECK(mv.m2 == Catch::Approx(1.0));  // the one same-gender one-educated household educated its firstborn
    CHECK(mv.m3 == Catch::Approx(0.0));
    CHECK(mv.m4 == Catch::Approx(1.0));
    REQUIRE(mv.m_birth_d.size() == 1);
    // only-daughters: mean(Y2) - mean(Y1) = (10+0)/2 - (10+10)/2 = -5
    CHECK(mv.m_birth_d[0] == Catch::Approx(-5.0));
    CHECK(mv.m_birth_s[0] == Catch::Approx(4.0));
}

TEST_CASE("m1 = 3 on the two-household instance") {
    std::vector<HouseholdOutcome> pop{
        make_hh("dd", {{true, 10.0}, {true, 10.0}}),
        make_hh("mix", {{true, 7.0}, {false, 9.0}}),
        make_hh("ss", {{false, 5.0}, {false, 5.0}}),
        make_hh("one_dd", {{true, 6.0}, {true, 0.0}}),
        make_hh("one_ds", {{true, 0.0}, {false, 6.0}}),
        make_hh("one_sd", {{false, 6.0}, {true, 0.0}}),
    };
    const auto mv = compute_moment_vector(pop, Stratum{ParentEduc::None, 2});
    // daughters only-d: (10+10+6+0)/4 = 6.5; daughters mixed: (7+0+0)/3 = 7/3
    CHECK(mv.m1 == Catch::Approx(6.5 - 7.0 / 3.0));
}

TEST_CASE("missing composition cell is reported") {
    std::vector<HouseholdOutcome> pop{make_hh("dd", {{true, 10.0}, {true, 10.0}}),
                                      make_hh("ss", {{false, 4.0}, {false, 8.0}})};
    CHECK_THROWS_WITH(compute_moment_vector(pop, Stratum{ParentEduc::None, 2}),
                      Catch::Matchers::ContainsSubstring("mixed-gender"));
}

TEST_CASE("moment vector is invariant to household order") {
    std::vector<HouseholdOutcome> pop{
        make_hh("dd", {{true, 10.0}, {true, 8.0}}),  make_hh("ds", {{true, 7.0}, {false, 9.0}}),
        make_hh("ss", {{false, 4.0}, {false, 8.0}}), make_hh("dd2", {{true, 10.0}, {true, 0.0}}),
        make_hh("ds2", {{true, 0.0}, {false, 12.0}}), make_hh("sd2", {{false, 0.0}, {true, 11.0}}),
        make_hh("sd", {{false, 14.0}, {true, 3.0}}),
    };
    const auto a = compute_moment_vector(pop, Stratum{ParentEduc::None, 2}).flatten();
    std::reverse(pop.begin(), pop.end());
    const auto b = compute_moment_vector(pop, Stratum{ParentEduc::None, 2}).flatten();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("no-disadvantage simulation centers the moments at their symmetric values") {
    PopulationConfig cfg;
    cfg.n_households = 40000;
    cfg.seed = 31;
    const auto specs = generate_population(cfg);
    Theta theta;  // zero disadvantages
    const double p_sym = 1.0 - cfg.ability.cdf(0.5);
    theta.p1 = p_sym;
    theta.p_fb_d = p_sym;
    theta.p_sb_d = 1.0 - p_sym;
    const auto pop = simulate_population(specs, theta, 77);
    const auto mv = compute_moment_vector(pop, Stratum{ParentEduc::None, 2});

    // two MC standard errors at this sample size
    CHECK(std::abs(mv.m1) < 0.12);
    CHECK(std::abs(mv.m_birth_d[0]) < 0.25);
    CHECK(std::abs(mv.m_birth_s[0]) < 0.25);
    CHECK(std::abs(mv.m2 - p_sym) < 0.015);
    CHECK(std::abs(mv.m3 - p_sym) < 0.02);
    CHECK(std::abs(mv.m4 - (1.0 - p_sym)) < 0.02);
    CHECK(mv.m2 >= 0.0);
    CHECK(mv.m2 <= 1.0);
}

TEST_CASE("three-child strata flow through generation, simulation, and moments") {
    PopulationConfig cfg;
    cfg.n_households = 8000;
    cfg.seed = 61;
    cfg.nc_weights = {{2, 0.5}, {3, 0.5}};
    cfg.gender_comp_weights = {{"dd", 0.125}, {"ds", 0.125}, {"sd", 0.125}, {"ss", 0.125},
                               {"ddd", 0.125}, {"dds", 0.125}, {"ssd", 0.125}, {"sss", 0.125}};
    const auto specs = generate_population(cfg);
    Theta theta;
    theta.theta1 = 0.02;
    theta.alpha_gap = 0.002;
    theta.p1 = 0.4;
    theta.p_fb_d = 0.2;
    theta.p_sb_d = 0.35;
    theta.p_high_aversion = 0.5;
    theta.p_medium_aversion = 0.3;
    const auto pop = simulate_population(specs, theta, 62);

    const auto strata = list_strata(pop);
    REQUIRE(strata.size() == 2);
    const auto mv3 = compute_moment_vector(pop, Stratum{ParentEduc::None, 3});
    REQUIRE(mv3.m_birth_d.size() == 2);
    REQUIRE(mv3.m_birth_s.size() == 2);
    CHECK(mv3.m2 >= 0.0);
    CHECK(mv3.m2 <= 1.0);
    for (double b : mv3.m_birth_d) CHECK(std::abs(b) <= 21.0);
    const auto st = variance_decomposition(pop);
    CHECK(std::abs(st.total_var - st.within_var_mean - st.between_var) < 1e-9);
}

TEST_CASE("share_all_educated identifies the aversion share") {
    PopulationConfig cfg;
    cfg.n_households = 20000;
    cfg.seed = 3;
    const auto specs = generate_population(cfg);
    Theta theta;
    theta.p_high_aversion = 0.62;
    const auto pop = simulate_population(specs, theta, 5);
    CHECK(std::abs(share_all_educated(pop, Stratum{ParentEduc::None, 2}) - 0.62) < 0.01);
}
