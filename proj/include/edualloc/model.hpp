#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "edualloc/ability.hpp"
#include "edualloc/rng.hpp"
#include "edualloc/types.hpp"

// Structural model of one household's education-resource allocation:
// parameters, per-child return exponents, the utility the household
// maximizes, the intensive-margin solver, and the extensive-margin draws.

namespace edualloc {

struct Theta {
    double theta1 = 0.0;       // gender penalty on the return exponent
    double alpha_gap = 0.0;    // yearly cost gap between adjacent birth orders
    double p1 = 0.5;           // P(firstborn is the educated child | same-gender, low aversion)
    double p_fb_d = 0.5;       // P(daughter educated | mixed, firstborn daughter, low aversion)
    double p_sb_d = 0.5;       // P(daughter educated | mixed, firstborn son, low aversion)
    double gamma = 0.5;        // baseline curvature of the return to education
    double p_high_aversion = 0.5;    // share of households educating all children
    double p_medium_aversion = 0.0;  // three-child households educating two children
    double alpha_base = 0.01;  // last-born yearly cost; allocations depend only on gaps

    // Three-child subset choices (uniform by default, config-overridable):
    // p_low_child[i] = P(child i+1 is the single educated child);
    // p_medium_pair = { P(child 1 is in the educated pair), P(pair is {1,2} | child 1 in pair) }.
    std::array<double, 2> p_low_child{1.0 / 3.0, 1.0 / 3.0};
    std::array<double, 2> p_medium_pair{2.0 / 3.0, 0.5};

    void validate() const {
        auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!in01(p1) || !in01(p_fb_d) || !in01(p_sb_d) || !in01(p_high_aversion) || !in01(p_medium_aversion))
            throw std::invalid_argument("Theta: probabilities must lie in [0,1]");
        if (p_high_aversion + p_medium_aversion > 1.0 + 1e-12)
            throw std::invalid_argument("Theta: aversion shares exceed 1");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("Theta: gamma must lie in (0,1)");
        if (!(theta1 < gamma))
            throw std::invalid_argument("Theta: theta1 must be below gamma (delta stays positive)");
        if (theta1 < 0.0) throw std::invalid_argument("Theta: theta1 must be >= 0");
        if (alpha_gap < 0.0) throw std::invalid_argument("Theta: alpha_gap must be >= 0");
        if (!(alpha_base > 0.0)) throw std::invalid_argument("Theta: alpha_base must be > 0");
        if (!in01(p_low_child[0]) || !in01(p_low_child[1]) || p_low_child[0] + p_low_child[1] > 1.0 + 1e-12)
            throw std::invalid_argument("Theta: p_low_child must be a sub-distribution");
        if (!in01(p_medium_pair[0]) || !in01(p_medium_pair[1]))
            throw std::invalid_argument("Theta: p_medium_pair entries must lie in [0,1]");
    }

    // Yearly cost by birth position: the last-born is the base, earlier
    // children cost alpha_gap more per step up the birth order.
    double alpha(int birth_order, int n_children) const {
        return alpha_base + alpha_gap * static_cast<double>(n_children - birth_order);
    }
};

// delta_{i,h} = gamma - theta1 * Female_i * (share of brothers among siblings)
inline double delta_exponent(const ChildSpec& child, const HouseholdSpec& hh, const Theta& theta) {
    if (!child.female) return theta.gamma;
    int brothers = 0;
    for (const auto& sib : hh.children)
        if (sib.birth_order != child.birth_order && !sib.female) ++brothers;
    const double share = static_cast<double>(brothers) / static_cast<double>(hh.n_children() - 1);
    return theta.gamma - theta.theta1 * share;
}

// Sum over children of a_i q_i^delta_i - alpha_i q_i; zero years contribute
// nothing, so the extensive margin enters through the mask in `alloc`.
inline double household_utility(const Allocation& alloc, const HouseholdSpec& hh, const Theta& theta) {
    const int n = hh.n_children();
    if (static_cast<int>(alloc.years.size()) != n || static_cast<int>(alloc.educated.size()) != n)
        throw std::invalid_argument("household_utility: allocation size mismatch");
    double total = 0.0;
    double u = 0.0;
    for (int i = 0; i < n; ++i) {
        const double q = alloc.years[i];
        if (q < -1e-12 || q > hh.q_max + 1e-9)
            throw std::invalid_argument("household_utility: q_i outside [0, q_max]");
        if (!alloc.educated[i] && q != 0.0)
            throw std::invalid_argument("household_utility: uneducated child with positive years");
        total += q;
        if (q == 0.0) continue;
        const double d = delta_exponent(hh.children[i], hh, theta);
        u += hh.children[i].ability * std::pow(q, d) - theta.alpha(i + 1, n) * q;
    }
    if (total > hh.q_T + 1e-9)
        throw std::invalid_argument("household_utility: allocation exceeds the budget");
    return u;
}

namespace detail {

struct EducChild {
    double a;      // ability
    double d;      // return exponent
    double alpha;  // yearly cost
};

// Marginal utility of a year for one child at q years.
inline double marginal(const EducChild& c, double q) {
    return c.a * c.d * std::pow(q, c.d - 1.0) - c.alpha;
}

// Two-child split of `budget` (fully spent): bisection on the strictly
// decreasing marginal-utility difference, then Newton polish. Returns the
// first child's years. Caps clamp the root to [budget - q_max, q_max].
inline double solve_pair_first(const EducChild& c1, const EducChild& c2, double budget, double q_max) {
    const double lo_bound = std::max(0.0, budget - q_max);
    const double hi_bound = std::min(budget, q_max);
    if (hi_bound - lo_bound < 1e-14) return hi_bound;

    auto foc = [&](double x) { return marginal(c1, x) - marginal(c2, budget - x); };

    // marginal utility diverges at 0 (d < 1), so the FOC can only pin a
    // corner when a cap truncates the interval
    const double eps = 1e-13 * std::max(1.0, budget);
    if (lo_bound > 0.0 && foc(lo_bound) <= 0.0) return lo_bound;
    if (hi_bound < budget && foc(hi_bound) >= 0.0) return hi_bound;

    double lo = std::max(lo_bound, eps);
    double hi = std::min(hi_bound, budget - eps);
    double mid = lo + 0.5 * (hi - lo);
    for (int iter = 0; iter < 200 && hi - lo > 1e-10; ++iter) {
        mid = lo + 0.5 * (hi - lo);
        const double f = foc(mid);
        if (f == 0.0) return mid;
        if (f > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    // Newton polish toward |foc| ~ machine zero; the derivative is available
    // in closed form and the iterate is safeguarded inside [lo, hi]
    double x = mid;
    for (int iter = 0; iter < 12; ++iter) {
        const double f = foc(x);
        if (std::abs(f) < 1e-13) break;
        const double fp = c1.a * c1.d * (c1.d - 1.0) * std::pow(x, c1.d - 2.0) +
                          c2.a * c2.d * (c2.d - 1.0) * std::pow(budget - x, c2.d - 2.0);
        if (!(fp < 0.0)) break;
        double xn = x - f / fp;
        if (!(xn > lo && xn < hi)) break;
        x = xn;
    }
    return x;
}

// Derivative of the optimal two-child value with respect to the budget:
// the common marginal at an interior split, the uncapped child's marginal
// when the cap binds.
inline double pair_budget_marginal(const EducChild& c1, const EducChild& c2, double budget, double q_max) {
    const double x = solve_pair_first(c1, c2, budget, q_max);
    const double y = budget - x;
    const bool x_capped = x >= q_max - 1e-9;
    const bool y_capped = y >= q_max - 1e-9;
    if (x_capped && y_capped) return 0.0;
    if (x_capped) return marginal(c2, y);
    if (y_capped) return marginal(c1, x);
    return 0.5 * (marginal(c1, x) + marginal(c2, y));
}

} // namespace detail

// Argmax of household_utility over allocations that spend min(q_T, caps) on
// the children flagged in `educated_mask`. A single educated child takes
// min(q_T, q_max); two children split by FOC bisection; three children are
// solved by an outer bisection over the firstborn's years with the two-child
// solve nested inside.
inline Allocation solve_allocation(const HouseholdSpec& hh, const Theta& theta,
                                   const std::vector<bool>& educated_mask) {
    theta.validate();
    const int n = hh.n_children();
    if (static_cast<int>(educated_mask.size()) != n)
        throw std::invalid_argument("solve_allocation: mask size mismatch");
    if (hh.q_T <= 0.0) throw std::invalid_argument("solve_allocation: q_T must be positive");

    std::vector<int> educ;
    for (int i = 0; i < n; ++i)
        if (educated_mask[i]) educ.push_back(i);
    if (educ.empty()) throw std::invalid_argument("solve_allocation: no educated children");

    Allocation out;
    out.years.assign(n, 0.0);
    out.educated = educated_mask;

    auto child_of = [&](int idx) {
        return detail::EducChild{hh.children[idx].ability,
                                 delta_exponent(hh.children[idx], hh, theta),
                                 theta.alpha(idx + 1, n)};
    };

    const double budget = std::min(hh.q_T, hh.q_max * static_cast<double>(educ.size()));

    if (educ.size() == 1) {
        out.years[educ[0]] = std::min(hh.q_T, hh.q_max);
        return out;
    }

    if (educ.size() == 2) {
        const auto ca = child_of(educ[0]);
        const auto cb = child_of(educ[1]);
        // canonical orientation: always solve for the lexicographically larger
        // child, so swapping the two children mirrors the solution bit-exactly
        auto precedes = [](const detail::EducChild& u, const detail::EducChild& v) {
            if (u.a != v.a) return u.a > v.a;
            if (u.d != v.d) return u.d > v.d;
            return u.alpha < v.alpha;
        };
        const bool swapped = precedes(cb, ca);
        const double x = swapped ? detail::solve_pair_first(cb, ca, budget, hh.q_max)
                                 : detail::solve_pair_first(ca, cb, budget, hh.q_max);
        const double rest = budget - x;
        out.years[educ[0]] = swapped ? rest : x;
        out.years[educ[1]] = swapped ? x : rest;
        return out;
    }

    // three educated children: outer bisection over q_1
    const auto c1 = child_of(educ[0]);
    const auto c2 = child_of(educ[1]);
    const auto c3 = child_of(educ[2]);
    const double lo_bound = std::max(0.0, budget - 2.0 * hh.q_max);
    const double hi_bound = std::min(budget, hh.q_max);
    auto outer = [&](double q1) {
        return detail::marginal(c1, q1) - detail::pair_budget_marginal(c2, c3, budget - q1, hh.q_max);
    };
    const double eps = 1e-12 * std::max(1.0, budget);
    double q1;
    if (lo_bound > 0.0 && outer(lo_bound) <= 0.0) {
        q1 = lo_bound;
    } else if (hi_bound < budget - 2.0 * eps && outer(hi_bound) >= 0.0) {
        q1 = hi_bound;
    } else {
        double lo = std::max(lo_bound, eps);
        double hi = std::min(hi_bound, budget - 2.0 * eps);
        for (int iter = 0; iter < 250 && hi - lo > 1e-11; ++iter) {
            const double mid = lo + 0.5 * (hi - lo);
            if (outer(mid) > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        q1 = lo + 0.5 * (hi - lo);
    }
    const double rest = budget - q1;
    const double q2 = detail::solve_pair_first(c2, c3, rest, hh.q_max);
    out.years[educ[0]] = q1;
    out.years[educ[1]] = q2;
    out.years[educ[2]] = rest - q2;
    return out;
}

// Ability cutoff above which child 1 is the chosen educated child when only
// one child is schooled: compares full-budget surpluses
// a1 qT^{d1} - alpha1 qT  vs  (1-a1) qT^{d2} - alpha2 qT.
inline double threshold_from_costgap(double alpha_gap, double q_T, double delta1, double delta2) {
    if (!(q_T > 0.0)) throw std::invalid_argument("threshold_from_costgap: q_T must be positive");
    const double p1 = std::pow(q_T, delta1);
    const double p2 = std::pow(q_T, delta2);
    return (alpha_gap * q_T + p2) / (p1 + p2);
}

// Inverse of the above in the cost gap.
inline double costgap_from_threshold(double threshold, double q_T, double delta1, double delta2) {
    if (!(q_T > 0.0)) throw std::invalid_argument("costgap_from_threshold: q_T must be positive");
    const double p1 = std::pow(q_T, delta1);
    const double p2 = std::pow(q_T, delta2);
    return (threshold * (p1 + p2) - p2) / q_T;
}

// P(a1 > threshold) under the ability law.
inline double p_from_threshold(double threshold, const AbilityDist& dist) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("p_from_threshold: threshold must lie in (0,1)");
    return 1.0 - dist.cdf(threshold);
}

// Quantile counterpart: the threshold whose upper-tail probability is p.
inline double threshold_from_p(double p, const AbilityDist& dist) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("threshold_from_p: p must lie in (0,1)");
    return dist.quantile(1.0 - p);
}

// P(child 1 is the educated child | low aversion) for two-child compositions.
inline double p_child1_educated(Comp2 comp, const Theta& theta) {
    switch (comp) {
        case Comp2::OnlyDaughters:
        case Comp2::OnlySons: return theta.p1;
        case Comp2::FirstbornDaughter: return theta.p_fb_d;
        case Comp2::FirstbornSon: return 1.0 - theta.p_sb_d;
    }
    return theta.p1;
}

// Draw which children get schooled. High-aversion households educate all of
// them; otherwise two-child households pick one child by the
// composition-specific Bernoulli, and three-child households follow the
// nested medium/low-aversion scheme with sum constraints 2 and 1.
inline std::vector<bool> draw_extensive_set(const HouseholdSpec& hh, const Theta& theta, Rng& rng) {
    theta.validate();
    const int n = hh.n_children();
    if (n != 2 && n != 3)
        throw std::invalid_argument("draw_extensive_set: supported family sizes are 2 and 3");

    std::vector<bool> mask(n, false);
    if (rng.bernoulli(theta.p_high_aversion)) {
        mask.assign(n, true);
        return mask;
    }

    if (n == 2) {
        const double p = p_child1_educated(hh.composition2(), theta);
        const bool first = rng.bernoulli(p);
        mask[0] = first;
        mask[1] = !first;
        return mask;
    }

    // three children: medium (educate 2) vs low (educate 1) conditional on
    // not-high; Bernoulli normalized so the shares match the stated levels
    const double p_not_high = 1.0 - theta.p_high_aversion;
    const double p_med_cond = p_not_high > 0.0 ? std::min(1.0, theta.p_medium_aversion / p_not_high) : 0.0;
    if (rng.bernoulli(p_med_cond)) {
        if (rng.bernoulli(theta.p_medium_pair[0])) {
            mask[0] = true;
            if (rng.bernoulli(theta.p_medium_pair[1]))
                mask[1] = true;
            else
                mask[2] = true;
        } else {
            mask[1] = mask[2] = true;
        }
        return mask;
    }
    const double u = rng.uniform01();
    if (u < theta.p_low_child[0])
        mask[0] = true;
    else if (u < theta.p_low_child[0] + theta.p_low_child[1])
        mask[1] = true;
    else
        mask[2] = true;
    return mask;
}

// Extensive draw followed by the intensive solve.
inline Allocation simulate_household(const HouseholdSpec& hh, const Theta& theta, Rng& rng) {
    if (hh.q_T <= 0.0) throw std::invalid_argument("simulate_household: q_T must be positive");
    const auto mask = draw_extensive_set(hh, theta, rng);
    return solve_allocation(hh, theta, mask);
}

} // namespace edualloc
