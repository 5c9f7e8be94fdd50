#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/types.hpp"

// Reduced-form machinery: OLS, the household fixed-effects (within)
// estimator, the daughter-son difference regression, and the decomposition of
// average within-household inequality into gender / birth order / ability.

namespace edualloc {

struct RegressionResult {
    std::vector<std::string> names;
    std::vector<double> coefficients;
    std::vector<double> std_errors;
    std::vector<double> residuals;    // from the demeaned regression
    double r_squared = 0.0;           // within R^2 for FE models
    std::int64_t n_obs = 0;
    std::int64_t n_groups = 0;

    double coef(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return coefficients[i];
        throw std::invalid_argument("no coefficient named '" + name + "'");
    }
    double se(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return std_errors[i];
        throw std::invalid_argument("no coefficient named '" + name + "'");
    }
};

// Within transformation (group demeaning) followed by OLS; numerically
// identical to OLS on group dummies. Degrees of freedom account for the
// absorbed group means.
inline RegressionResult fe_regression(const std::vector<double>& outcome,
                                      const std::vector<std::vector<double>>& regressors,
                                      const std::vector<std::string>& names,
                                      const std::vector<std::int64_t>& group_ids) {
    const std::size_t n = outcome.size();
    const std::size_t k = regressors.size();
    if (names.size() != k) throw std::invalid_argument("fe_regression: names/regressors mismatch");
    for (const auto& col : regressors)
        if (col.size() != n) throw std::invalid_argument("fe_regression: column length mismatch");
    if (group_ids.size() != n) throw std::invalid_argument("fe_regression: group_ids length mismatch");
    if (n < k + 2) throw std::invalid_argument("fe_regression: too few observations");

    std::map<std::int64_t, std::pair<double, std::int64_t>> acc;  // group -> (sum, count) reused per column
    auto demean = [&](const std::vector<double>& col) {
        acc.clear();
        for (std::size_t i = 0; i < n; ++i) {
            auto& a = acc[group_ids[i]];
            a.first += col[i];
            a.second += 1;
        }
        Eigen::VectorXd out(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& a = acc.at(group_ids[i]);
            out(static_cast<Eigen::Index>(i)) = col[i] - a.first / static_cast<double>(a.second);
        }
        return out;
    };

    Eigen::VectorXd y = demean(outcome);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        Eigen::VectorXd col = demean(regressors[j]);
        if (col.squaredNorm() < 1e-18 * static_cast<double>(n))
            throw std::invalid_argument("fe_regression: regressor '" + names[j] +
                                        "' has no within-group variation");
        X.col(static_cast<Eigen::Index>(j)) = col;
    }

    const std::int64_t n_groups = static_cast<std::int64_t>(acc.size());
    Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || (xtx.diagonal().array() <= 0.0).any())
        throw std::invalid_argument("fe_regression: collinear regressors");
    Eigen::VectorXd beta = ldlt.solve(X.transpose() * y);
    Eigen::VectorXd resid = y - X * beta;

    const double rss = resid.squaredNorm();
    const double tss = y.squaredNorm();
    const double dof = static_cast<double>(n) - static_cast<double>(k) - static_cast<double>(n_groups);
    if (dof <= 0.0) throw std::invalid_argument("fe_regression: no residual degrees of freedom");
    const double sigma2 = rss / dof;
    Eigen::MatrixXd cov = sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k),
                                                                        static_cast<Eigen::Index>(k)));

    RegressionResult res;
    res.names = names;
    res.coefficients.assign(beta.data(), beta.data() + beta.size());
    for (std::size_t j = 0; j < k; ++j)
        res.std_errors.push_back(std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(j),
                                                             static_cast<Eigen::Index>(j)))));
    res.residuals.assign(resid.data(), resid.data() + resid.size());
    res.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;
    res.n_obs = static_cast<std::int64_t>(n);
    res.n_groups = n_groups;
    return res;
}

enum class Margin { Extensive, Intensive, All };

inline const char* to_string(Margin m) {
    switch (m) {
        case Margin::Extensive: return "extensive";
        case Margin::Intensive: return "intensive";
        case Margin::All: return "all";
    }
    return "all";
}

namespace detail {

struct FePanel {
    std::vector<double> y;
    std::vector<double> female, firstborn, interaction;
    std::vector<std::int64_t> groups;
    std::int64_t n_mixed = 0, n_households = 0, n_fb_daughter_mixed = 0;
    double avg_range = 0.0;
};

template <typename Range>
FePanel build_panel(const Range& pop, Margin margin) {
    FePanel p;
    std::int64_t gid = 0;
    for (const auto& hh : pop) {
        if (margin == Margin::Intensive && hh.n_educated() != hh.n_children()) continue;
        if (margin == Margin::Extensive && hh.n_educated() == hh.n_children()) continue;
        ++gid;
        ++p.n_households;
        const bool mixed = !hh.same_gender();
        if (mixed) {
            ++p.n_mixed;
            if (hh.children[0].female) ++p.n_fb_daughter_mixed;
        }
        double lo = hh.children[0].years, hi = lo;
        for (const auto& c : hh.children) {
            const double outcome = margin == Margin::Extensive ? (c.years > 0.0 ? 1.0 : 0.0) : c.years;
            p.y.push_back(outcome);
            p.female.push_back(c.female ? 1.0 : 0.0);
            p.firstborn.push_back(c.birth_order == 1 ? 1.0 : 0.0);
            p.interaction.push_back((c.female && c.birth_order == 1) ? 1.0 : 0.0);
            p.groups.push_back(gid);
            lo = std::min(lo, c.years);
            hi = std::max(hi, c.years);
        }
        if (margin == Margin::Extensive) {
            double flo = 1.0, fhi = 0.0;
            for (const auto& c : hh.children) {
                const double f = c.years > 0.0 ? 1.0 : 0.0;
                flo = std::min(flo, f);
                fhi = std::max(fhi, f);
            }
            p.avg_range += fhi - flo;
        } else {
            p.avg_range += hi - lo;
        }
    }
    if (p.n_households > 0) p.avg_range /= static_cast<double>(p.n_households);
    return p;
}

} // namespace detail

// Household fixed-effects regression of education (or the educated indicator,
// at the extensive margin) on Female, Firstborn and their interaction.
template <typename Range>
RegressionResult fe_regression_children(const Range& pop, Margin margin) {
    const auto p = detail::build_panel(pop, margin);
    if (p.n_households < 2)
        throw std::invalid_argument(std::string("fe_regression_children: margin '") + to_string(margin) +
                                    "' leaves fewer than 2 households");
    return fe_regression(p.y, {p.female, p.firstborn, p.interaction},
                         {"female", "firstborn", "female_x_firstborn"}, p.groups);
}

struct DiffRegressionResult {
    double gender_effect = 0.0;   // average effect of being a daughter
    double birth_effect = 0.0;    // average effect of being the firstborn
    double mean_gap_fb_daughter = 0.0;  // daughter-son gap, firstborn-daughter households
    double mean_gap_fb_son = 0.0;       // daughter-son gap, firstborn-son households
    std::int64_t n_fb_daughter = 0;
    std::int64_t n_fb_son = 0;
};

// Daughter-son gap regressed on the firstborn-daughter indicator. The two
// cell means identify gender + birth and gender - birth, so the average
// effects are half the sum and half the difference.
template <typename Range>
DiffRegressionResult diff_regression(const Range& pop) {
    DiffRegressionResult r;
    double sum_fbd = 0.0, sum_fbs = 0.0;
    for (const auto& hh : pop) {
        if (hh.n_children() != 2 || hh.same_gender()) continue;
        const int daughter = hh.children[0].female ? 0 : 1;
        const double gap = hh.children[static_cast<std::size_t>(daughter)].years -
                           hh.children[static_cast<std::size_t>(1 - daughter)].years;
        if (daughter == 0) {
            sum_fbd += gap;
            ++r.n_fb_daughter;
        } else {
            sum_fbs += gap;
            ++r.n_fb_son;
        }
    }
    if (r.n_fb_daughter == 0 || r.n_fb_son == 0)
        throw std::invalid_argument("diff_regression: need both firstborn-daughter and firstborn-son cells");
    r.mean_gap_fb_daughter = sum_fbd / static_cast<double>(r.n_fb_daughter);
    r.mean_gap_fb_son = sum_fbs / static_cast<double>(r.n_fb_son);
    r.gender_effect = 0.5 * (r.mean_gap_fb_daughter + r.mean_gap_fb_son);
    r.birth_effect = 0.5 * (r.mean_gap_fb_daughter - r.mean_gap_fb_son);
    return r;
}

struct DecompositionShares {
    double gender_share = 0.0;      // percent of average within-household inequality
    double birth_order_share = 0.0;
    double ability_share = 0.0;
    Margin margin = Margin::All;
    bool clamped = false;           // a negative raw component was clamped to zero
    double avg_inequality = 0.0;
    RegressionResult regression;
};

// Attribution of the average within-household range:
//   gender      |b_female + b_interaction * share(firstborn daughter | mixed)| * share(mixed)
//   birth order |b_firstborn|
//   ability     the remainder of the average range
// normalized to 100%. The remainder is clamped at zero when the linear
// attribution overshoots (the two effects partly offset inside |.|).
template <typename Range>
DecompositionShares decomposition_shares(const Range& pop, Margin margin) {
    const auto panel = detail::build_panel(pop, margin);
    if (panel.n_households < 2 || panel.n_mixed == 0)
        throw std::invalid_argument(std::string("decomposition_shares: margin '") + to_string(margin) +
                                    "' leaves a degenerate subpopulation");
    DecompositionShares out;
    out.margin = margin;
    out.avg_inequality = panel.avg_range;
    out.regression = fe_regression(panel.y, {panel.female, panel.firstborn, panel.interaction},
                                   {"female", "firstborn", "female_x_firstborn"}, panel.groups);

    const double share_fbd = static_cast<double>(panel.n_fb_daughter_mixed) /
                             static_cast<double>(panel.n_mixed);
    const double share_mixed = static_cast<double>(panel.n_mixed) / static_cast<double>(panel.n_households);
    const double gender_raw = std::abs(out.regression.coef("female") +
                                       out.regression.coef("female_x_firstborn") * share_fbd) *
                              share_mixed;
    const double birth_raw = std::abs(out.regression.coef("firstborn"));
    double ability_raw = panel.avg_range - gender_raw - birth_raw;
    if (ability_raw < 0.0) {
        ability_raw = 0.0;
        out.clamped = true;
    }
    const double total = gender_raw + birth_raw + ability_raw;
    if (total <= 0.0) throw std::invalid_argument("decomposition_shares: degenerate (no inequality)");
    out.gender_share = 100.0 * gender_raw / total;
    out.birth_order_share = 100.0 * birth_raw / total;
    out.ability_share = std::max(0.0, 100.0 - out.gender_share - out.birth_order_share);
    return out;
}

} // namespace edualloc
