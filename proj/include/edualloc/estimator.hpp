#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/ability.hpp"
#include "edualloc/model.hpp"
#include "edualloc/moments.hpp"
#include "edualloc/rng.hpp"
#include "edualloc/types.hpp"

// Simulated method of moments. The extensive-margin shares are inverted
// directly from the data (stage one); the return penalty and the cost gap are
// then fit by grid search plus Nelder-Mead on the squared moment gaps (stage
// two). Ability draws are fixed once per estimation (common random numbers)
// and the aversion-type draws are integrated out in closed form, so the
// simulated objective is a smooth deterministic function of theta.

namespace edualloc {

struct EstimationConfig {
    int s = 20;                    // ability draws per simulated household
    int simulated_households = 2000;
    int max_evaluations = 400;     // stage-two objective budget (grid + refinement)
    int bootstrap_replications = 200;
    double fd_step_rel = 1e-4;     // forward-difference step, relative
    double fd_step_floor = 0.01;   // parameter scale floor for the step
    std::uint64_t seed = 1;
    AbilityDist ability{};
    double gamma = 0.5;
    double alpha_base = 0.01;
    double theta1_min = 0.0;
    double theta1_max = -1.0;      // <0: use 0.9 * gamma
    double alpha_gap_min = 0.0;
    double alpha_gap_max = 0.05;
    int min_extensive_households = 10;  // below this, stage one is skipped

    void validate() const {
        if (s < 1 || simulated_households < 1) throw std::invalid_argument("estimation: s and H must be >= 1");
        if (bootstrap_replications < 2) throw std::invalid_argument("estimation: B must be >= 2");
        if (!(fd_step_rel > 0.0)) throw std::invalid_argument("estimation: fd step must be positive");
        if (max_evaluations < 130) throw std::invalid_argument("estimation: budget below the initial grid");
        ability.validate();
    }
    double theta1_hi() const { return theta1_max < 0.0 ? 0.9 * gamma : theta1_max; }
};

// Simulation template: observable household mix resampled from the data plus
// the frozen ability draws.
struct SimTemplate {
    std::vector<HouseholdSpec> households;       // abilities unset here
    std::vector<std::vector<double>> abilities;  // [household * s + draw] -> per-child vector
    int s = 1;
    Stratum stratum;
};

template <typename Range>
SimTemplate make_template(const Range& data, const Stratum& stratum, const EstimationConfig& cfg) {
    std::vector<const HouseholdOutcome*> pool;
    for (const auto& hh : data)
        if (hh.stratum() == stratum && hh.q_T() > 0.0) pool.push_back(&hh);
    if (pool.empty())
        throw std::invalid_argument("make_template: stratum " + stratum.label() +
                                    " has no households with positive budgets");

    SimTemplate tmpl;
    tmpl.stratum = stratum;
    tmpl.s = cfg.s;
    Rng pick(derive_seed(cfg.seed, "template"));
    Rng adraw(derive_seed(cfg.seed, "abilities"));
    tmpl.households.reserve(static_cast<std::size_t>(cfg.simulated_households));
    for (int h = 0; h < cfg.simulated_households; ++h) {
        const HouseholdOutcome& src = *pool[pick.uniform_index(pool.size())];
        HouseholdSpec spec;
        spec.parent_educ = src.parent_educ;
        spec.q_T = src.q_T();
        spec.children.resize(src.children.size());
        for (std::size_t i = 0; i < src.children.size(); ++i)
            spec.children[i] = ChildSpec{src.children[i].female, src.children[i].birth_order, 0.0};
        tmpl.households.push_back(std::move(spec));
        for (int k = 0; k < cfg.s; ++k)
            tmpl.abilities.push_back(sample_ability_vector(stratum.n_c, cfg.ability, adraw));
    }
    return tmpl;
}

namespace detail {

// Expected per-child years for one household and one ability draw, with the
// aversion-type branches weighted in closed form.
inline void expected_years(const HouseholdSpec& hh, const Theta& theta, std::vector<double>& ey) {
    const int n = hh.n_children();
    ey.assign(static_cast<std::size_t>(n), 0.0);
    const double qe = std::min(hh.q_T, hh.q_max);
    const double ph = theta.p_high_aversion;

    std::vector<bool> mask(static_cast<std::size_t>(n), true);
    if (ph > 0.0) {
        const auto both = solve_allocation(hh, theta, mask);
        for (int i = 0; i < n; ++i) ey[static_cast<std::size_t>(i)] += ph * both.years[static_cast<std::size_t>(i)];
    }
    if (ph >= 1.0) return;

    if (n == 2) {
        const double pc1 = p_child1_educated(hh.composition2(), theta);
        ey[0] += (1.0 - ph) * pc1 * qe;
        ey[1] += (1.0 - ph) * (1.0 - pc1) * qe;
        return;
    }

    // three children
    const double pm = std::min(theta.p_medium_aversion, 1.0 - ph);
    const double pl = 1.0 - ph - pm;
    if (pm > 0.0) {
        const double w12 = theta.p_medium_pair[0] * theta.p_medium_pair[1];
        const double w13 = theta.p_medium_pair[0] * (1.0 - theta.p_medium_pair[1]);
        const double w23 = 1.0 - theta.p_medium_pair[0];
        const std::pair<double, std::array<int, 2>> pairs[] = {
            {w12, {0, 1}}, {w13, {0, 2}}, {w23, {1, 2}}};
        for (const auto& [w, idx] : pairs) {
            if (w <= 0.0) continue;
            mask.assign(static_cast<std::size_t>(n), false);
            mask[static_cast<std::size_t>(idx[0])] = mask[static_cast<std::size_t>(idx[1])] = true;
            const auto alloc = solve_allocation(hh, theta, mask);
            for (int i = 0; i < n; ++i)
                ey[static_cast<std::size_t>(i)] += pm * w * alloc.years[static_cast<std::size_t>(i)];
        }
    }
    if (pl > 0.0) {
        const double pw[3] = {theta.p_low_child[0], theta.p_low_child[1],
                              1.0 - theta.p_low_child[0] - theta.p_low_child[1]};
        for (int i = 0; i < n; ++i) ey[static_cast<std::size_t>(i)] += pl * pw[i] * qe;
    }
}

} // namespace detail

// Model moment vector at theta. m1 and the birth-order differences come from
// the simulated allocations; the extensive shares are the Bernoulli
// parameters themselves (their simulation average would add noise and
// nothing else).
inline MomentVector simulate_model_moments(const Theta& theta, const SimTemplate& tmpl,
                                           const EstimationConfig& cfg) {
    theta.validate();
    const int nc = tmpl.stratum.n_c;
    double yd_same = 0.0, yd_mixed = 0.0;
    std::int64_t nd_same = 0, nd_mixed = 0;
    std::vector<double> ysum_d(static_cast<std::size_t>(nc), 0.0), ysum_s(static_cast<std::size_t>(nc), 0.0);
    std::int64_t n_dd = 0, n_ss = 0;

    std::vector<double> ey;
    for (std::size_t h = 0; h < tmpl.households.size(); ++h) {
        HouseholdSpec hh = tmpl.households[h];
        const bool same = hh.same_gender();
        const bool only_d = same && hh.children[0].female;
        for (int k = 0; k < tmpl.s; ++k) {
            const auto& a = tmpl.abilities[h * static_cast<std::size_t>(tmpl.s) + static_cast<std::size_t>(k)];
            for (int i = 0; i < nc; ++i) hh.children[static_cast<std::size_t>(i)].ability = a[static_cast<std::size_t>(i)];
            detail::expected_years(hh, theta, ey);
            if (only_d) {
                ++n_dd;
                for (int i = 0; i < nc; ++i) {
                    yd_same += ey[static_cast<std::size_t>(i)];
                    ++nd_same;
                    ysum_d[static_cast<std::size_t>(i)] += ey[static_cast<std::size_t>(i)];
                }
            } else if (same) {
                ++n_ss;
                for (int i = 0; i < nc; ++i) ysum_s[static_cast<std::size_t>(i)] += ey[static_cast<std::size_t>(i)];
            } else {
                for (int i = 0; i < nc; ++i)
                    if (hh.children[static_cast<std::size_t>(i)].female) {
                        yd_mixed += ey[static_cast<std::size_t>(i)];
                        ++nd_mixed;
                    }
            }
        }
    }
    if (n_dd == 0 || n_ss == 0 || nd_mixed == 0)
        throw std::invalid_argument("simulate_model_moments: template is missing a composition cell");

    MomentVector mv;
    mv.stratum = tmpl.stratum;
    mv.m1 = yd_same / static_cast<double>(nd_same) - yd_mixed / static_cast<double>(nd_mixed);
    mv.m2 = nc == 2 ? theta.p1 : theta.p_low_child[0];
    mv.m3 = nc == 2 ? theta.p_fb_d : 0.0;
    mv.m4 = nc == 2 ? theta.p_sb_d : 0.0;
    for (int t = 0; t + 1 < nc; ++t) {
        mv.m_birth_d.push_back((ysum_d[static_cast<std::size_t>(t + 1)] - ysum_d[static_cast<std::size_t>(t)]) /
                               static_cast<double>(n_dd));
        mv.m_birth_s.push_back((ysum_s[static_cast<std::size_t>(t + 1)] - ysum_s[static_cast<std::size_t>(t)]) /
                               static_cast<double>(n_ss));
    }
    return mv;
}

// Q(theta) = sum of squared data-model moment gaps (identity weighting).
inline double smm_objective(const Theta& theta, const MomentVector& data_moments, const SimTemplate& tmpl,
                            const EstimationConfig& cfg) {
    const auto model = simulate_model_moments(theta, tmpl, cfg);
    const auto d = data_moments.flatten();
    const auto m = model.flatten();
    if (d.size() != m.size()) throw std::invalid_argument("smm_objective: moment vectors not conformable");
    double q = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) q += (d[i] - m[i]) * (d[i] - m[i]);
    return q;
}

struct EstimationResult {
    Theta theta_hat;
    double objective_at_min = 0.0;
    MomentVector data_moments;
    MomentVector model_moments;
    Eigen::MatrixXd V;         // bootstrap covariance of the data moments
    Eigen::MatrixXd jacobian;  // d model-moments / d theta at theta_hat
    Eigen::MatrixXd omega;     // parameter covariance
    std::vector<double> std_errors;
    std::vector<std::string> param_names{"theta1", "alpha_gap", "p1", "p_fb_d", "p_sb_d"};
    double p_high_aversion_se = 0.0;
    bool converged = false;
    bool stage1_skipped = false;
    bool v_pseudo_inverted = false;
    int n_evaluations = 0;
    std::vector<std::string> notes;
};

template <typename Range>
Eigen::MatrixXd bootstrap_moment_cov(const Range& data, const Stratum& stratum, int B, std::uint64_t seed) {
    if (B < 2) throw std::invalid_argument("bootstrap_moment_cov: B must be >= 2");
    std::vector<const HouseholdOutcome*> pool;
    for (const auto& hh : data)
        if (hh.stratum() == stratum) pool.push_back(&hh);
    if (pool.empty()) throw std::invalid_argument("bootstrap_moment_cov: empty stratum");

    std::vector<Eigen::VectorXd> rows;
    for (int b = 0; b < B; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        bool done = false;
        for (int attempt = 0; attempt < 10 && !done; ++attempt) {
            std::vector<HouseholdOutcome> resample;
            resample.reserve(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) resample.push_back(*pool[rng.uniform_index(pool.size())]);
            try {
                const auto mv = compute_moment_vector(resample, stratum).flatten();
                rows.emplace_back(Eigen::Map<const Eigen::VectorXd>(mv.data(), static_cast<Eigen::Index>(mv.size())));
                done = true;
            } catch (const std::invalid_argument&) {
                // a composition cell dropped out of the resample; redraw
            }
        }
        if (!done)
            throw std::runtime_error("bootstrap_moment_cov: replication " + std::to_string(b) +
                                     " lost a composition cell 10 times in a row");
    }
    const Eigen::Index k = rows.front().size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
    for (const auto& r : rows) mean += r;
    mean /= static_cast<double>(rows.size());
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(k, k);
    for (const auto& r : rows) V += (r - mean) * (r - mean).transpose();
    V /= static_cast<double>(rows.size() - 1);
    return V;
}

namespace detail {

inline Theta theta_from_stage2(double theta1, double alpha_gap, const Theta& base) {
    Theta t = base;
    t.theta1 = theta1;
    t.alpha_gap = alpha_gap;
    return t;
}

// Nelder-Mead on the 2-d stage-two problem, points projected into bounds.
struct NmResult {
    double x0 = 0.0, x1 = 0.0, f = 0.0;
    int evals = 0;
    bool converged = false;
};

inline NmResult nelder_mead_2d(const std::function<double(double, double)>& f, double x0, double x1,
                               double lo0, double hi0, double lo1, double hi1, int max_evals,
                               double step_scale = 0.05) {
    auto clamp = [&](std::array<double, 2> p) {
        p[0] = std::clamp(p[0], lo0, hi0);
        p[1] = std::clamp(p[1], lo1, hi1);
        return p;
    };
    int evals = 0;
    auto eval = [&](const std::array<double, 2>& p) {
        ++evals;
        return f(p[0], p[1]);
    };

    const double step0 = std::max(step_scale * (hi0 - lo0), 1e-7);
    const double step1 = std::max(step_scale * (hi1 - lo1), 1e-9);
    // grow the simplex away from the upper bound so clamping cannot collapse it
    const std::array<double, 2> start = clamp({x0, x1});
    std::array<std::array<double, 2>, 3> pts = {
        start, clamp({start[0] + (start[0] + step0 > hi0 ? -step0 : step0), start[1]}),
        clamp({start[0], start[1] + (start[1] + step1 > hi1 ? -step1 : step1)})};
    std::array<double, 3> fv = {eval(pts[0]), eval(pts[1]), eval(pts[2])};

    bool converged = false;
    while (evals < max_evals) {
        std::array<int, 3> order = {0, 1, 2};
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int b = order[0], m = order[1], w = order[2];
        if (std::abs(fv[w] - fv[b]) <= 1e-6 * std::max(1.0, std::abs(fv[b])) &&
            std::abs(pts[w][0] - pts[b][0]) + std::abs(pts[w][1] - pts[b][1]) <= 1e-7) {
            converged = true;
            break;
        }
        const std::array<double, 2> centroid = {(pts[b][0] + pts[m][0]) / 2.0, (pts[b][1] + pts[m][1]) / 2.0};
        auto along = [&](double t) {
            return clamp({centroid[0] + t * (centroid[0] - pts[w][0]), centroid[1] + t * (centroid[1] - pts[w][1])});
        };
        const auto refl = along(1.0);
        const double fr = eval(refl);
        if (fr < fv[b]) {
            const auto exp_pt = along(2.0);
            const double fe = eval(exp_pt);
            if (fe < fr) {
                pts[w] = exp_pt;
                fv[w] = fe;
            } else {
                pts[w] = refl;
                fv[w] = fr;
            }
        } else if (fr < fv[m]) {
            pts[w] = refl;
            fv[w] = fr;
        } else {
            const auto con = along(fr < fv[w] ? 0.5 : -0.5);
            const double fc = eval(con);
            if (fc < std::min(fr, fv[w])) {
                pts[w] = con;
                fv[w] = fc;
            } else {
                // shrink toward the best vertex
                for (int i : {m, w}) {
                    pts[i] = clamp({pts[b][0] + 0.5 * (pts[i][0] - pts[b][0]),
                                    pts[b][1] + 0.5 * (pts[i][1] - pts[b][1])});
                    fv[i] = eval(pts[i]);
                }
            }
        }
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    return NmResult{pts[order[0]][0], pts[order[0]][1], fv[order[0]], evals, converged};
}

inline Eigen::MatrixXd solve_spd_or_pseudo(const Eigen::MatrixXd& A, bool& used_pseudo) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(A.rows(), A.cols());
    if (ldlt.info() == Eigen::Success) {
        const Eigen::MatrixXd inv = ldlt.solve(I);
        if (((A * inv - I).norm() / I.norm()) < 1e-6) return inv;
    }
    used_pseudo = true;
    return A.completeOrthogonalDecomposition().pseudoInverse();
}

} // namespace detail

// Omega = (J' V^-1 J)^-1; with a unit Jacobian this is V itself.
inline Eigen::MatrixXd omega_from_jacobian(const Eigen::MatrixXd& J, const Eigen::MatrixXd& V,
                                           bool& v_pseudo_inverted) {
    const Eigen::MatrixXd Vinv = detail::solve_spd_or_pseudo(V, v_pseudo_inverted);
    const Eigen::MatrixXd H = J.transpose() * Vinv * J;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(H.rows(), H.cols());
    Eigen::MatrixXd omega;
    if (ldlt.info() == Eigen::Success) omega = ldlt.solve(I);
    if (ldlt.info() != Eigen::Success || ((H * omega - I).norm() / I.norm()) > 1e-6)
        throw std::runtime_error(
            "standard_errors: J'V^-1 J is singular; increase simulated households or draws (H*s)");
    return 0.5 * (omega + omega.transpose());
}

// Delta-method parameter covariance: Omega = (J' V^-1 J)^-1 with a numerical
// forward-difference Jacobian under common random numbers. When stage one was
// skipped the p's are pinned, so Omega is built over (theta1, alpha_gap) and
// the intensive moment rows only.
inline void standard_errors(EstimationResult& result, const SimTemplate& tmpl, const EstimationConfig& cfg) {
    const Theta& th = result.theta_hat;
    const auto base = simulate_model_moments(th, tmpl, cfg).flatten();
    const Eigen::Index nm_all = static_cast<Eigen::Index>(base.size());
    constexpr int np_all = 5;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nm_all, np_all);

    std::vector<int> active_params{0, 1, 2, 3, 4};
    std::vector<int> active_rows(static_cast<std::size_t>(nm_all));
    for (Eigen::Index i = 0; i < nm_all; ++i) active_rows[static_cast<std::size_t>(i)] = static_cast<int>(i);
    if (result.stage1_skipped) {
        active_params = {0, 1};
        active_rows.clear();
        for (Eigen::Index i = 0; i < nm_all; ++i)
            if (i != 1 && i != 2 && i != 3) active_rows.push_back(static_cast<int>(i));
    }

    const double vals[np_all] = {th.theta1, th.alpha_gap, th.p1, th.p_fb_d, th.p_sb_d};
    for (int j : active_params) {
        double h = cfg.fd_step_rel * std::max(std::abs(vals[j]), cfg.fd_step_floor);
        // step backward when the forward point would leave the parameter space
        // (a p at 1, or theta1 at the concavity bound)
        if ((j >= 2 && vals[j] + h > 1.0) || (j == 0 && vals[j] + h >= th.gamma)) h = -h;
        Theta up = th;
        switch (j) {
            case 0: up.theta1 += h; break;
            case 1: up.alpha_gap += h; break;
            case 2: up.p1 += h; break;
            case 3: up.p_fb_d += h; break;
            case 4: up.p_sb_d += h; break;
        }
        const auto bumped = simulate_model_moments(up, tmpl, cfg).flatten();
        for (Eigen::Index i = 0; i < nm_all; ++i)
            J(i, j) = (bumped[static_cast<std::size_t>(i)] - base[static_cast<std::size_t>(i)]) / h;
    }
    result.jacobian = J;

    const Eigen::Index nr = static_cast<Eigen::Index>(active_rows.size());
    const Eigen::Index npa = static_cast<Eigen::Index>(active_params.size());
    Eigen::MatrixXd Jsub(nr, npa), Vsub(nr, nr);
    for (Eigen::Index i = 0; i < nr; ++i) {
        for (Eigen::Index j = 0; j < npa; ++j) Jsub(i, j) = J(active_rows[static_cast<std::size_t>(i)],
                                                              active_params[static_cast<std::size_t>(j)]);
        for (Eigen::Index j = 0; j < nr; ++j)
            Vsub(i, j) = result.V(active_rows[static_cast<std::size_t>(i)], active_rows[static_cast<std::size_t>(j)]);
    }

    bool v_pseudo = false;
    const Eigen::MatrixXd omega_sub = omega_from_jacobian(Jsub, Vsub, v_pseudo);
    result.v_pseudo_inverted = v_pseudo;
    if (v_pseudo) result.notes.push_back("V was singular; pseudo-inverse used");

    result.omega = Eigen::MatrixXd::Zero(np_all, np_all);
    for (Eigen::Index i = 0; i < npa; ++i)
        for (Eigen::Index j = 0; j < npa; ++j)
            result.omega(active_params[static_cast<std::size_t>(i)], active_params[static_cast<std::size_t>(j)]) =
                omega_sub(i, j);
    result.std_errors.assign(np_all, 0.0);
    for (int j = 0; j < np_all; ++j) result.std_errors[static_cast<std::size_t>(j)] =
        std::sqrt(std::max(0.0, result.omega(j, j)));
    if (result.stage1_skipped)
        result.notes.push_back("p standard errors are zero: the p's were pinned, not estimated");
}

template <typename Range>
EstimationResult estimate_theta(const Range& data, const Stratum& stratum, const EstimationConfig& cfg) {
    cfg.validate();
    if (stratum.n_c != 2)
        throw std::invalid_argument("estimate_theta: only two-child strata are estimated");

    std::vector<HouseholdOutcome> sub;
    std::int64_t n_dropped = 0;
    for (const auto& hh : data) {
        if (hh.stratum() != stratum) continue;
        if (hh.n_educated() == 0) {
            ++n_dropped;  // outside the model's support (some child is always educated)
            continue;
        }
        sub.push_back(hh);
    }
    if (sub.empty()) throw std::invalid_argument("estimate_theta: stratum " + stratum.label() + " is empty");

    EstimationResult result;
    if (n_dropped > 0)
        result.notes.push_back(std::to_string(n_dropped) + " all-uneducated households excluded");

    std::int64_t n_one_educated = 0;
    for (const auto& hh : sub)
        if (hh.n_educated() == 1) ++n_one_educated;

    Theta theta;
    theta.gamma = cfg.gamma;
    theta.alpha_base = cfg.alpha_base;
    theta.p_high_aversion = share_all_educated(sub, stratum);

    bool stage1 = n_one_educated >= cfg.min_extensive_households;
    if (stage1) {
        try {
            result.data_moments = compute_moment_vector(sub, stratum);
        } catch (const std::invalid_argument& e) {
            stage1 = false;  // an extensive cell is empty; fall back to the pinned-p path
            result.notes.push_back(e.what());
        }
    }
    if (stage1) {
        theta.p1 = result.data_moments.m2;
        theta.p_fb_d = result.data_moments.m3;
        theta.p_sb_d = result.data_moments.m4;
    } else {
        // extensive cells too thin to identify the p's (nearly every child is
        // educated): pin them at their no-disadvantage values and match only
        // the intensive moments
        result.stage1_skipped = true;
        result.notes.push_back("stage one skipped: only " + std::to_string(n_one_educated) +
                               " households with exactly one educated child");
        const double f_half = cfg.ability.cdf(0.5);
        theta.p1 = 1.0 - f_half;
        theta.p_fb_d = 1.0 - f_half;
        theta.p_sb_d = f_half;
        MomentVector mv;
        double yd_same = 0.0, yd_mixed = 0.0;
        std::int64_t nd_same = 0, nd_mixed = 0;
        double bd = 0.0, bs = 0.0;
        std::int64_t ndd = 0, nss = 0;
        for (const auto& hh : sub) {
            const bool same = hh.same_gender();
            if (same && hh.children[0].female) {
                ++ndd;
                bd += hh.children[1].years - hh.children[0].years;
                for (const auto& c : hh.children) {
                    yd_same += c.years;
                    ++nd_same;
                }
            } else if (same) {
                ++nss;
                bs += hh.children[1].years - hh.children[0].years;
            } else {
                for (const auto& c : hh.children)
                    if (c.female) {
                        yd_mixed += c.years;
                        ++nd_mixed;
                    }
            }
        }
        if (ndd == 0 || nss == 0 || nd_mixed == 0)
            throw std::invalid_argument("estimate_theta: stratum lacks a gender-composition cell");
        mv.stratum = stratum;
        mv.m1 = yd_same / static_cast<double>(nd_same) - yd_mixed / static_cast<double>(nd_mixed);
        mv.m2 = theta.p1;  // not identified: gap pinned at zero
        mv.m3 = theta.p_fb_d;
        mv.m4 = theta.p_sb_d;
        mv.m_birth_d.push_back(bd / static_cast<double>(ndd));
        mv.m_birth_s.push_back(bs / static_cast<double>(nss));
        result.data_moments = mv;
    }

    const SimTemplate tmpl = make_template(sub, stratum, cfg);

    // stage two: coarse grid, then Nelder-Mead from the best grid point
    const double t1_lo = cfg.theta1_min, t1_hi = cfg.theta1_hi();
    const double ag_lo = cfg.alpha_gap_min, ag_hi = cfg.alpha_gap_max;
    int evals = 0;
    auto objective = [&](double t1, double ag) {
        ++evals;
        return smm_objective(detail::theta_from_stage2(t1, ag, theta), result.data_moments, tmpl, cfg);
    };

    double best_t1 = t1_lo, best_ag = ag_lo, best_q = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 10; ++i) {
        for (int j = 0; j <= 10; ++j) {
            const double t1 = t1_lo + (t1_hi - t1_lo) * i / 10.0;
            const double ag = ag_lo + (ag_hi - ag_lo) * j / 10.0;
            const double q = objective(t1, ag);
            if (q < best_q) {
                best_q = q;
                best_t1 = t1;
                best_ag = ag;
            }
        }
    }
    auto refine = [&](double t1, double ag, double q0) {
        detail::NmResult best{t1, ag, q0, 0, false};
        // two passes: a coarse simplex from the grid winner, then a restart
        // with a tighter simplex to resolve optima inside one grid cell
        for (double scale : {0.05, 0.005}) {
            const int budget = cfg.max_evaluations - evals;
            if (budget <= 4) break;
            const auto nm = detail::nelder_mead_2d([&](double a, double b) { return objective(a, b); },
                                                   best.x0, best.x1, t1_lo, t1_hi, ag_lo, ag_hi, budget, scale);
            if (nm.f <= best.f) {
                best.x0 = nm.x0;
                best.x1 = nm.x1;
                best.f = nm.f;
            }
            best.converged = nm.converged;
        }
        return best;
    };
    const auto nm = refine(best_t1, best_ag, best_q);
    result.n_evaluations = evals;
    result.converged = nm.converged;
    theta.theta1 = nm.x0;
    theta.alpha_gap = nm.x1;
    result.theta_hat = theta;
    result.objective_at_min = nm.f;
    if (!nm.converged)
        throw NonConvergenceError("estimate_theta: optimizer budget exhausted before the objective settled",
                                  {theta.theta1, theta.alpha_gap}, result.objective_at_min);

    result.model_moments = simulate_model_moments(theta, tmpl, cfg);
    if (stage1) {
        result.V =
            bootstrap_moment_cov(sub, stratum, cfg.bootstrap_replications, derive_seed(cfg.seed, "bootstrap"));
    } else {
        // bootstrap the intensive moments only; the pinned p rows stay at zero
        Rng rng(derive_seed(cfg.seed, "bootstrap"));
        const Eigen::Index k = static_cast<Eigen::Index>(result.data_moments.flatten().size());
        std::vector<Eigen::VectorXd> rows;
        for (int b = 0; b < cfg.bootstrap_replications; ++b) {
            std::vector<const HouseholdOutcome*> res;
            res.reserve(sub.size());
            for (std::size_t i = 0; i < sub.size(); ++i) res.push_back(&sub[rng.uniform_index(sub.size())]);
            double yd_same = 0.0, yd_mixed = 0.0, bd = 0.0, bs = 0.0;
            std::int64_t nd_same = 0, nd_mixed = 0, ndd = 0, nss = 0;
            for (const auto* hh : res) {
                const bool same = hh->same_gender();
                if (same && hh->children[0].female) {
                    ++ndd;
                    bd += hh->children[1].years - hh->children[0].years;
                    for (const auto& c : hh->children) {
                        yd_same += c.years;
                        ++nd_same;
                    }
                } else if (same) {
                    ++nss;
                    bs += hh->children[1].years - hh->children[0].years;
                } else {
                    for (const auto& c : hh->children)
                        if (c.female) {
                            yd_mixed += c.years;
                            ++nd_mixed;
                        }
                }
            }
            if (ndd == 0 || nss == 0 || nd_mixed == 0) {
                --b;
                continue;
            }
            Eigen::VectorXd row = Eigen::VectorXd::Zero(k);
            row(0) = yd_same / static_cast<double>(nd_same) - yd_mixed / static_cast<double>(nd_mixed);
            row(4) = bd / static_cast<double>(ndd);
            row(5) = bs / static_cast<double>(nss);
            rows.push_back(row);
        }
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
        for (const auto& r : rows) mean += r;
        mean /= static_cast<double>(rows.size());
        result.V = Eigen::MatrixXd::Zero(k, k);
        for (const auto& r : rows) result.V += (r - mean) * (r - mean).transpose();
        result.V /= static_cast<double>(rows.size() - 1);
    }
    standard_errors(result, tmpl, cfg);

    {
        const double ph = theta.p_high_aversion;
        result.p_high_aversion_se = std::sqrt(std::max(0.0, ph * (1.0 - ph) / static_cast<double>(sub.size())));
    }
    return result;
}

} // namespace edualloc
