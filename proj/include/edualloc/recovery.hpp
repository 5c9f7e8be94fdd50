#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/model.hpp"
#include "edualloc/types.hpp"

// Inversion of the two-child allocation map: given an interior observed split
// and theta, the interior first-order condition is linear in a1 once
// a2 = 1 - a1 is substituted, so each household's ability pair is recovered
// in closed form. Corner observations are only set-identified.

namespace edualloc {

struct RecoveredAbility {
    std::string household_id;
    double a1 = 0.0;
    double a2 = 0.0;
    double residual = 0.0;   // max |solve(recovered) - observed| in years
    bool corner = false;
    double a1_lower = 0.0;   // bounds; equal to a1 for interior recoveries
    double a1_upper = 1.0;
};

class CornerIdentificationError : public std::runtime_error {
public:
    CornerIdentificationError(std::string msg, double a1_lower, double a1_upper)
        : std::runtime_error(std::move(msg)), a1_lower(a1_lower), a1_upper(a1_upper) {}
    double a1_lower;
    double a1_upper;
};

namespace detail {

// a1 solving a1 d1 q1^{d1-1} - alpha1 = (1-a1) d2 q2^{d2-1} - alpha2.
inline double invert_foc(double q1, double q2, double d1, double d2, double alpha1, double alpha2) {
    const double m1 = d1 * std::pow(q1, d1 - 1.0);
    const double m2 = d2 * std::pow(q2, d2 - 1.0);
    return (m2 + alpha1 - alpha2) / (m1 + m2);
}

} // namespace detail

inline RecoveredAbility recover_ability_pair(double q1, double q2, double q_T, const HouseholdSpec& hh,
                                             const Theta& theta) {
    theta.validate();
    if (hh.n_children() != 2)
        throw std::invalid_argument("recover_ability_pair: two-child households only");
    if (std::abs(q1 + q2 - q_T) > 1e-6)
        throw std::invalid_argument("recover_ability_pair: q1 + q2 must equal q_T");
    if (!(q1 > 0.0) || !(q2 > 0.0))
        throw std::invalid_argument("recover_ability_pair: both children must be educated");

    const double d1 = delta_exponent(hh.children[0], hh, theta);
    const double d2 = delta_exponent(hh.children[1], hh, theta);
    const double alpha1 = theta.alpha(1, 2);
    const double alpha2 = theta.alpha(2, 2);
    const double tol = 1e-9;

    if (q1 >= hh.q_max - tol || q2 >= hh.q_max - tol) {
        // cap binding: the FOC only bounds the favored child's ability
        const double a_eq = detail::invert_foc(q1, q2, d1, d2, alpha1, alpha2);
        const double lo = q1 >= hh.q_max - tol ? a_eq : 0.0;
        const double hi = q1 >= hh.q_max - tol ? 1.0 : a_eq;
        throw CornerIdentificationError(
            "recover_ability_pair: allocation at the cap is set-identified, a1 in [" + std::to_string(lo) +
                ", " + std::to_string(hi) + "]",
            lo, hi);
    }

    const double a1 = detail::invert_foc(q1, q2, d1, d2, alpha1, alpha2);
    if (!(a1 > 0.0 && a1 < 1.0))
        throw std::runtime_error("recover_ability_pair: inverted ability outside (0,1)");

    RecoveredAbility out;
    out.a1 = a1;
    out.a2 = 1.0 - a1;
    out.a1_lower = out.a1_upper = a1;

    HouseholdSpec check = hh;
    check.q_T = q_T;
    check.children[0].ability = a1;
    check.children[1].ability = 1.0 - a1;
    const auto alloc = solve_allocation(check, theta, {true, true});
    out.residual = std::max(std::abs(alloc.years[0] - q1), std::abs(alloc.years[1] - q2));
    return out;
}

// Recover every two-child household with both children educated. Corner
// households are kept with their bounds and flagged.
template <typename Range>
std::vector<RecoveredAbility> recover_population(const Range& pop, const Theta& theta,
                                                 double q_max = kDefaultQMax) {
    std::vector<RecoveredAbility> out;
    for (const auto& hh : pop) {
        if (hh.n_children() != 2) continue;
        const double y1 = hh.children[0].years, y2 = hh.children[1].years;
        if (!(y1 > 0.0 && y2 > 0.0)) continue;
        HouseholdSpec spec;
        spec.parent_educ = hh.parent_educ;
        spec.q_T = y1 + y2;
        spec.q_max = q_max;
        spec.children = {ChildSpec{hh.children[0].female, 1, 0.5}, ChildSpec{hh.children[1].female, 2, 0.5}};
        try {
            auto rec = recover_ability_pair(y1, y2, y1 + y2, spec, theta);
            rec.household_id = hh.id;
            out.push_back(rec);
        } catch (const CornerIdentificationError& e) {
            RecoveredAbility rec;
            rec.household_id = hh.id;
            rec.corner = true;
            rec.a1_lower = e.a1_lower;
            rec.a1_upper = e.a1_upper;
            rec.a1 = y1 > y2 ? e.a1_lower : e.a1_upper;  // reported bound
            rec.a2 = 1.0 - rec.a1;
            rec.residual = std::numeric_limits<double>::quiet_NaN();
            out.push_back(rec);
        }
    }
    return out;
}

struct KsComparison {
    double statistic = 0.0;
    std::int64_t n1 = 0;
    std::int64_t n2 = 0;
};

struct AbilityDiagnostics {
    std::vector<double> a_daughters;
    std::vector<double> a_sons;
    std::vector<double> a_firstborn;
    std::vector<double> a_secondborn;
    KsComparison gender;       // daughters vs sons
    KsComparison birth_order;  // firstborn vs second-born
    std::int64_t n_recovered = 0;
    std::int64_t n_corner = 0;
};

namespace detail {

inline double ks_two_sample(std::vector<double> x, std::vector<double> y) {
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return d;
}

} // namespace detail

// Model-fit check: recovered abilities should look alike across gender and
// birth order when the model and theta are right.
template <typename Range>
AbilityDiagnostics ability_diagnostics(const Range& pop, const Theta& theta, double q_max = kDefaultQMax) {
    AbilityDiagnostics diag;
    const auto recovered = recover_population(pop, theta, q_max);

    std::size_t r = 0;
    for (const auto& hh : pop) {
        if (hh.n_children() != 2) continue;
        if (!(hh.children[0].years > 0.0 && hh.children[1].years > 0.0)) continue;
        const auto& rec = recovered[r++];
        if (rec.corner) {
            ++diag.n_corner;
            continue;
        }
        ++diag.n_recovered;
        const double a[2] = {rec.a1, rec.a2};
        for (int i = 0; i < 2; ++i) {
            (hh.children[static_cast<std::size_t>(i)].female ? diag.a_daughters : diag.a_sons).push_back(a[i]);
            (i == 0 ? diag.a_firstborn : diag.a_secondborn).push_back(a[i]);
        }
    }
    if (diag.n_recovered < 30)
        throw std::invalid_argument("ability_diagnostics: only " + std::to_string(diag.n_recovered) +
                                    " recoverable households; need at least 30");
    diag.gender = {detail::ks_two_sample(diag.a_daughters, diag.a_sons),
                   static_cast<std::int64_t>(diag.a_daughters.size()),
                   static_cast<std::int64_t>(diag.a_sons.size())};
    diag.birth_order = {detail::ks_two_sample(diag.a_firstborn, diag.a_secondborn),
                        static_cast<std::int64_t>(diag.a_firstborn.size()),
                        static_cast<std::int64_t>(diag.a_secondborn.size())};
    return diag;
}

} // namespace edualloc
