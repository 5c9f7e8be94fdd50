#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "edualloc/estimator.hpp"
#include "edualloc/population.hpp"

using namespace edualloc;

namespace {

Theta theta_star() {
    Theta t;
    t.theta1 = 0.02;
    t.alpha_gap = 0.002;
    t.p1 = 0.37;
    t.p_fb_d = 0.11;
    t.p_sb_d = 0.32;
    t.p_high_aversion = 0.5;
    return t;
}

// budgets capped at one child's maximum so the observed total equals the
// structural budget for every aversion type
PopulationConfig benin_like(std::int64_t n, std::uint64_t seed) {
    PopulationConfig cfg;
    cfg.n_households = n;
    cfg.seed = seed;
    cfg.q_T_sampler[ParentEduc::None].mean = 16.0;
    cfg.q_T_sampler[ParentEduc::None].sd = 4.0;
    cfg.q_T_sampler[ParentEduc::None].min = 4.0;
    cfg.q_T_sampler[ParentEduc::None].max = 21.0;
    return cfg;
}

// outcome rows that carry a spec population's observables into a template
std::vector<HouseholdOutcome> outcomes_from_specs(const std::vector<HouseholdSpec>& specs) {
    std::vector<HouseholdOutcome> out;
    out.reserve(specs.size());
    for (std::size_t h = 0; h < specs.size(); ++h) {
        HouseholdOutcome hh;
        hh.id = "h" + std::to_string(h);
        hh.parent_educ = specs[h].parent_educ;
        for (const auto& c : specs[h].children)
            hh.children.push_back(ChildOutcome{c.female, c.birth_order,
                                               specs[h].q_T / specs[h].n_children()});
        out.push_back(std::move(hh));
    }
    return out;
}

std::vector<HouseholdOutcome> data_at(const Theta& theta, std::int64_t n, std::uint64_t seed) {
    const auto specs = generate_population(benin_like(n, seed));
    return simulate_population(specs, theta, derive_seed(seed, "outcomes"), /*round_years=*/true);
}

} // namespace

TEST_CASE("simulate_model_moments centers at symmetric values without disadvantages") {
    const auto data = data_at(theta_star(), 4000, 100);
    EstimationConfig cfg;
    cfg.simulated_households = 2000;
    cfg.s = 10;
    cfg.seed = 9;
    const auto tmpl = make_template(data, Stratum{ParentEduc::None, 2}, cfg);

    Theta zero;
    const double p_sym = 1.0 - cfg.ability.cdf(0.5);
    zero.p1 = p_sym;
    zero.p_fb_d = p_sym;
    zero.p_sb_d = 1.0 - p_sym;
    zero.p_high_aversion = 0.5;
    const auto mv = simulate_model_moments(zero, tmpl, cfg);
    CHECK(std::abs(mv.m1) < 0.08);
    CHECK(std::abs(mv.m_birth_d[0]) < 0.15);
    CHECK(std::abs(mv.m_birth_s[0]) < 0.15);
    CHECK(mv.m2 == p_sym);
    CHECK(mv.m3 == p_sym);
    CHECK(mv.m4 == 1.0 - p_sym);
}

TEST_CASE("model moments reproduce the published m1 under a calibrated synthetic template") {
    // template calibrated so the non-educated-stratum moment m1 lands near the
    // published level: q_T centered at 18.4, eighty percent high aversion
    PopulationConfig pc;
    pc.n_households = 4000;
    pc.seed = 5;
    pc.q_T_sampler[ParentEduc::None].mean = 18.4;
    pc.q_T_sampler[ParentEduc::None].sd = 5.0;
    pc.q_T_sampler[ParentEduc::None].min = 4.0;
    pc.q_T_sampler[ParentEduc::None].max = 42.0;
    const auto specs = generate_population(pc);
    const auto data = outcomes_from_specs(specs);

    EstimationConfig cfg;
    cfg.simulated_households = 20000;
    cfg.s = 4;
    cfg.seed = 42;
    const auto tmpl = make_template(data, Stratum{ParentEduc::None, 2}, cfg);

    Theta t;
    t.theta1 = 0.0218;
    t.alpha_gap = 0.0018;
    t.p1 = 0.3663;
    t.p_fb_d = 0.1124;
    t.p_sb_d = 0.3217;
    t.p_high_aversion = 0.8;
    const auto mv = simulate_model_moments(t, tmpl, cfg);
    CHECK(std::abs(mv.m1 - 1.7169) < 0.1);
    CHECK(std::abs(mv.m2 - 0.3678) < 0.1);  // the p parameter itself
}

TEST_CASE("doubling s shrinks the Monte Carlo spread of m1 by about sqrt(2)") {
    // same template households throughout; only the ability draws vary
    const auto data = data_at(theta_star(), 3000, 200);
    const Stratum stratum{ParentEduc::None, 2};
    EstimationConfig base;
    base.simulated_households = 150;
    base.seed = 1;
    base.s = 1;
    const auto fixed = make_template(data, stratum, base);

    auto spread = [&](int s) {
        std::vector<double> m1s;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            SimTemplate tmpl;
            tmpl.stratum = stratum;
            tmpl.s = s;
            tmpl.households = fixed.households;
            Rng adraw(derive_seed(1000 + seed, "abilities"));
            for (std::size_t h = 0; h < tmpl.households.size(); ++h)
                for (int k = 0; k < s; ++k)
                    tmpl.abilities.push_back(sample_ability_vector(2, base.ability, adraw));
            EstimationConfig cfg = base;
            cfg.s = s;
            m1s.push_back(simulate_model_moments(theta_star(), tmpl, cfg).m1);
        }
        double mean = 0.0;
        for (double v : m1s) mean += v;
        mean /= static_cast<double>(m1s.size());
        double var = 0.0;
        for (double v : m1s) var += (v - mean) * (v - mean);
        return std::sqrt(var / static_cast<double>(m1s.size() - 1));
    };
    const double sd1 = spread(4);
    const double sd2 = spread(8);
    CHECK(sd2 < sd1);
    CHECK(sd2 / sd1 == Catch::Approx(1.0 / std::sqrt(2.0)).margin(0.25));
}

TEST_CASE("smm_objective is a sum of squared gaps and deterministic under a fixed seed") {
    const auto data = data_at(theta_star(), 4000, 300);
    const Stratum stratum{ParentEduc::None, 2};
    EstimationConfig cfg;
    cfg.simulated_households = 800;
    cfg.s = 8;
    cfg.seed = 77;
    const auto tmpl = make_template(data, stratum, cfg);

    const auto model = simulate_model_moments(theta_star(), tmpl, cfg);

    SECTION("zero at equal moments, quadratic in a single gap") {
        CHECK(smm_objective(theta_star(), model, tmpl, cfg) == 0.0);
        MomentVector shifted = model;
        shifted.m1 += 0.5;
        CHECK(smm_objective(theta_star(), shifted, tmpl, cfg) == Catch::Approx(0.25));
    }

    SECTION("objective is reproducible eval to eval") {
        const auto dm = compute_moment_vector(data, stratum);
        const double q1 = smm_objective(theta_star(), dm, tmpl, cfg);
        const double q2 = smm_objective(theta_star(), dm, tmpl, cfg);
        CHECK(q1 == q2);
    }

    SECTION("planted parameters beat nearby perturbations") {
        const auto dm = simulate_model_moments(theta_star(), tmpl, cfg);  // self-consistent data moments
        const double q_star = smm_objective(theta_star(), dm, tmpl, cfg);
        Rng rng(12);
        for (int rep = 0; rep < 20; ++rep) {
            Theta t = theta_star();
            t.theta1 *= 1.0 + (rng.bernoulli(0.5) ? 0.1 : -0.1);
            t.alpha_gap *= 1.0 + (rng.bernoulli(0.5) ? 0.1 : -0.1);
            CHECK(q_star < smm_objective(t, dm, tmpl, cfg));
        }
    }
}

TEST_CASE("bootstrap covariance") {
    const Stratum stratum{ParentEduc::None, 2};

    SECTION("constant data gives the zero matrix") {
        // four household kinds whose cell moments cannot move under resampling
        std::vector<HouseholdOutcome> pop;
        for (int h = 0; h < 60; ++h) {
            HouseholdOutcome hh;
            hh.id = "h" + std::to_string(h);
            switch (h % 4) {
                case 0: hh.children = {ChildOutcome{true, 1, 10.0}, ChildOutcome{true, 2, 8.0}}; break;
                case 1: hh.children = {ChildOutcome{false, 1, 10.0}, ChildOutcome{false, 2, 0.0}}; break;
                case 2: hh.children = {ChildOutcome{true, 1, 8.0}, ChildOutcome{false, 2, 0.0}}; break;
                default: hh.children = {ChildOutcome{false, 1, 0.0}, ChildOutcome{true, 2, 8.0}}; break;
            }
            pop.push_back(hh);
        }
        const auto V = bootstrap_moment_cov(pop, stratum, 50, 7);
        CHECK(V.norm() == 0.0);
    }

    SECTION("share moments concentrate like binomial draws and V is PSD") {
        const auto data = data_at(theta_star(), 6000, 400);
        const auto V = bootstrap_moment_cov(data, stratum, 500, 11);
        CHECK(V.rows() == 6);

        // m2 variance against p(1-p)/n over same-gender one-educated households
        std::int64_t n_cell = 0;
        for (const auto& hh : data)
            if (hh.same_gender() && hh.n_educated() == 1) ++n_cell;
        const auto dm = compute_moment_vector(data, stratum);
        const double expect = dm.m2 * (1.0 - dm.m2) / static_cast<double>(n_cell);
        CHECK(V(1, 1) == Catch::Approx(expect).epsilon(0.2));

        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        CHECK((V - V.transpose()).norm() < 1e-14);
    }
}

TEST_CASE("omega with a unit Jacobian is V itself") {
    Eigen::MatrixXd V(3, 3);
    V << 2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.1;
    bool pseudo = false;
    const auto omega = omega_from_jacobian(Eigen::MatrixXd::Identity(3, 3), V, pseudo);
    CHECK_FALSE(pseudo);
    CHECK((omega - V).norm() < 1e-9);
}

TEST_CASE("estimate_theta round trip at a planted theta") {
    const Theta truth = theta_star();
    const auto data = data_at(truth, 12000, 12345);
    const Stratum stratum{ParentEduc::None, 2};

    EstimationConfig cfg;
    cfg.simulated_households = 1000;
    cfg.s = 10;
    cfg.bootstrap_replications = 120;
    cfg.seed = 2718;
    const auto res = estimate_theta(data, stratum, cfg);

    // stage-one exactness
    const auto dm = compute_moment_vector(data, stratum);
    CHECK(res.theta_hat.p1 == dm.m2);
    CHECK(res.theta_hat.p_fb_d == dm.m3);
    CHECK(res.theta_hat.p_sb_d == dm.m4);
    CHECK(res.model_moments.m2 == dm.m2);
    CHECK(res.model_moments.m3 == dm.m3);
    CHECK(res.model_moments.m4 == dm.m4);

    CHECK(res.converged);
    REQUIRE(res.std_errors.size() == 5);
    const double est[5] = {res.theta_hat.theta1, res.theta_hat.alpha_gap, res.theta_hat.p1,
                           res.theta_hat.p_fb_d, res.theta_hat.p_sb_d};
    const double tru[5] = {truth.theta1, truth.alpha_gap, truth.p1, truth.p_fb_d, truth.p_sb_d};
    for (int j = 0; j < 5; ++j) {
        INFO("component " << res.param_names[static_cast<std::size_t>(j)] << " est " << est[j] << " truth "
                          << tru[j] << " se " << res.std_errors[static_cast<std::size_t>(j)]);
        CHECK(std::abs(est[j] - tru[j]) <= 3.0 * res.std_errors[static_cast<std::size_t>(j)]);
    }
    CHECK(std::abs(res.theta_hat.p_high_aversion - 0.5) < 0.02);

    SECTION("halving the finite-difference step barely moves the standard errors") {
        EstimationConfig half = cfg;
        half.fd_step_rel = cfg.fd_step_rel / 2.0;
        const auto tmpl = make_template(data, stratum, half);
        EstimationResult alt = res;
        standard_errors(alt, tmpl, half);
        for (int j = 0; j < 5; ++j)
            CHECK(std::abs(alt.std_errors[static_cast<std::size_t>(j)] -
                           res.std_errors[static_cast<std::size_t>(j)]) <
                  0.05 * res.std_errors[static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("estimator skips stage one when nearly everyone is educated") {
    Theta college = theta_star();
    college.theta1 = 0.0115;
    college.alpha_gap = 0.0016;
    college.p_high_aversion = 0.999;
    PopulationConfig pc = benin_like(6000, 777);
    pc.parent_educ_weights = {{ParentEduc::College, 1.0}};
    pc.q_T_sampler = {{ParentEduc::College, pc.q_T_sampler[ParentEduc::None]}};
    pc.q_T_sampler[ParentEduc::College].mean = 19.0;
    const auto specs = generate_population(pc);
    const auto data = simulate_population(specs, college, 31, true);

    EstimationConfig cfg;
    cfg.simulated_households = 800;
    cfg.s = 8;
    cfg.bootstrap_replications = 80;
    cfg.seed = 99;
    cfg.min_extensive_households = 30;
    const auto res = estimate_theta(data, Stratum{ParentEduc::College, 2}, cfg);
    CHECK(res.stage1_skipped);
    CHECK(res.theta_hat.p_high_aversion > 0.98);
    CHECK(res.std_errors[2] == 0.0);  // p's pinned, not estimated
    CHECK(std::abs(res.theta_hat.theta1 - college.theta1) <= std::max(3.0 * res.std_errors[0], 0.01));
}

TEST_CASE("exhausted optimizer budget raises a non-convergence error with the best iterate") {
    const auto data = data_at(theta_star(), 3000, 555);
    EstimationConfig cfg;
    cfg.simulated_households = 300;
    cfg.s = 4;
    cfg.max_evaluations = 131;  // grid only plus a few refinement steps
    cfg.seed = 4;
    try {
        estimate_theta(data, Stratum{ParentEduc::None, 2}, cfg);
        FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
        CHECK(e.best_point.size() == 2);
        CHECK(e.best_value >= 0.0);
    }
}
