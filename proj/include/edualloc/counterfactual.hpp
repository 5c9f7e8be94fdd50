#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/ability.hpp"
#include "edualloc/ecdf.hpp"
#include "edualloc/model.hpp"
#include "edualloc/parallel.hpp"
#include "edualloc/rng.hpp"
#include "edualloc/types.hpp"

// The three policy experiments: the ability level that offsets the
// disadvantages (cf1), cost-reduction packages versus the no-disadvantage
// world (cf2), and a non-targeted increase in education resources (cf3).
// Scenario pairs share per-household random streams, so comparisons use
// common random numbers throughout.

namespace edualloc {

struct PolicySpec {
    double firstborn_cost_cut_ext = 0.0;
    double firstborn_cost_cut_int = 0.0;
    std::array<double, 2> daughter_cost_cut_ext{0.0, 0.0};  // by daughter's birth position
    std::array<double, 2> daughter_cost_cut_int{0.0, 0.0};
    bool extensive_fix = false;  // reset the extensive-margin p's to their no-disadvantage values
    bool calibrated = false;     // derive the cuts from theta so the disadvantages cancel exactly

    void validate() const {
        for (double c : {firstborn_cost_cut_ext, firstborn_cost_cut_int, daughter_cost_cut_ext[0],
                         daughter_cost_cut_ext[1], daughter_cost_cut_int[0], daughter_cost_cut_int[1]})
            if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("PolicySpec: cuts must lie in [0,1]");
    }

    bool is_zero() const {
        return !calibrated && !extensive_fix && firstborn_cost_cut_ext == 0.0 && firstborn_cost_cut_int == 0.0 &&
               daughter_cost_cut_ext[0] == 0.0 && daughter_cost_cut_ext[1] == 0.0 &&
               daughter_cost_cut_int[0] == 0.0 && daughter_cost_cut_int[1] == 0.0;
    }
};

// Ability draws for counterfactuals: the fitted Beta law, or the recovered
// empirical abilities resampled with replacement.
struct AbilitySource {
    AbilityDist dist{};
    std::vector<double> pool;  // non-empty: draw a1 from here instead

    double draw_a1(Rng& rng) const {
        if (!pool.empty()) return pool[rng.uniform_index(pool.size())];
        return dist.sample(rng);
    }
};

enum class GapKind { DaughterSon, FirstbornSecondborn };

enum class Scenario { Baseline, NoDisadvantage, Policy, ExtensiveFix };

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::Baseline: return "baseline";
        case Scenario::NoDisadvantage: return "no_disadvantage";
        case Scenario::Policy: return "policy";
        case Scenario::ExtensiveFix: return "extensive_fix";
    }
    return "baseline";
}

namespace detail {

// Per-child yearly cost reductions implied by a policy for one household.
struct AlphaCuts {
    double child1 = 0.0;
    double child2 = 0.0;
};

inline AlphaCuts intensive_cuts(const Theta& theta, const PolicySpec& policy, Comp2 comp, double q_T) {
    AlphaCuts cuts;
    if (policy.calibrated) {
        // firstborn: cancel the cost gap; mixed-household daughter: match the
        // sons' marginal return at the equal split of this household's budget
        cuts.child1 += theta.alpha_gap;
        const bool mixed = comp == Comp2::FirstbornDaughter || comp == Comp2::FirstbornSon;
        if (mixed) {
            const double half = 0.5 * q_T;
            const double dd = theta.gamma - theta.theta1;
            const double offset =
                0.5 * theta.gamma * std::pow(half, theta.gamma - 1.0) - 0.5 * dd * std::pow(half, dd - 1.0);
            if (comp == Comp2::FirstbornDaughter)
                cuts.child1 += offset;
            else
                cuts.child2 += offset;
        }
        return cuts;
    }
    cuts.child1 += policy.firstborn_cost_cut_int;
    if (comp == Comp2::FirstbornDaughter) cuts.child1 += policy.daughter_cost_cut_int[0];
    if (comp == Comp2::FirstbornSon) cuts.child2 += policy.daughter_cost_cut_int[1];
    return cuts;
}

inline AlphaCuts extensive_cuts(const PolicySpec& policy, Comp2 comp) {
    AlphaCuts cuts;
    cuts.child1 += policy.firstborn_cost_cut_ext;
    if (comp == Comp2::FirstbornDaughter) cuts.child1 += policy.daughter_cost_cut_ext[0];
    if (comp == Comp2::FirstbornSon) cuts.child2 += policy.daughter_cost_cut_ext[1];
    return cuts;
}

} // namespace detail

// P(child 1 is the educated child) with threshold 1/2, i.e. when neither
// costs nor returns favor either child.
inline double symmetric_p_child1(const AbilityDist& dist) { return 1.0 - dist.cdf(0.5); }

// Scenario-adjusted probability that child 1 is the educated child. The
// policy shifts the p-implied choice threshold through the cost-gap algebra
// and maps it back through the ability law.
inline double scenario_p_child1(Scenario scen, const Theta& theta, const PolicySpec& policy,
                                const AbilityDist& dist, Comp2 comp, double q_T) {
    if (scen == Scenario::NoDisadvantage || scen == Scenario::ExtensiveFix) return symmetric_p_child1(dist);
    const double p_base = p_child1_educated(comp, theta);
    if (scen == Scenario::Baseline) return p_base;
    if (policy.extensive_fix || policy.calibrated) return symmetric_p_child1(dist);

    const auto cuts = detail::extensive_cuts(policy, comp);
    if (cuts.child1 == 0.0 && cuts.child2 == 0.0) return p_base;
    if (!(p_base > 0.0 && p_base < 1.0)) return p_base;

    HouseholdSpec probe;  // only the gender pattern matters for the deltas
    probe.q_T = q_T;
    probe.children = {ChildSpec{comp == Comp2::OnlyDaughters || comp == Comp2::FirstbornDaughter, 1, 0.5},
                      ChildSpec{comp == Comp2::OnlyDaughters || comp == Comp2::FirstbornSon, 2, 0.5}};
    const double d1 = delta_exponent(probe.children[0], probe, theta);
    const double d2 = delta_exponent(probe.children[1], probe, theta);
    const double t_base = threshold_from_p(p_base, dist);
    const double gap = costgap_from_threshold(t_base, q_T, d1, d2);
    const double t_new = threshold_from_costgap(gap - cuts.child1 + cuts.child2, q_T, d1, d2);
    const double t_clamped = std::min(1.0 - 1e-12, std::max(1e-12, t_new));
    return p_from_threshold(t_clamped, dist);
}

namespace detail {

// One household's daughter-son (or firstborn-secondborn) gap under a
// scenario; the uniforms are passed in so scenarios share the same draws.
inline double scenario_gap(Scenario scen, const Theta& theta, const PolicySpec& policy,
                           const AbilityDist& dist, const HouseholdSpec& base, double a1, double u_nu,
                           double u_choice, GapKind kind) {
    HouseholdSpec hh = base;
    hh.children[0].ability = a1;
    hh.children[1].ability = 1.0 - a1;

    Theta th = theta;
    AlphaCuts cuts;
    if (scen == Scenario::NoDisadvantage) {
        th.theta1 = 0.0;
        th.alpha_gap = 0.0;
    } else if (scen == Scenario::Policy) {
        cuts = intensive_cuts(theta, policy, hh.composition2(), hh.q_T);
    }

    double q1 = 0.0, q2 = 0.0;
    if (u_nu < theta.p_high_aversion) {
        const double d1 = delta_exponent(hh.children[0], hh, th);
        const double d2 = delta_exponent(hh.children[1], hh, th);
        const EducChild c1{a1, d1, th.alpha(1, 2) - cuts.child1};
        const EducChild c2{1.0 - a1, d2, th.alpha(2, 2) - cuts.child2};
        const double budget = std::min(hh.q_T, 2.0 * hh.q_max);
        q1 = solve_pair_first(c1, c2, budget, hh.q_max);
        q2 = budget - q1;
    } else {
        const double p1e = scenario_p_child1(scen, theta, policy, dist, hh.composition2(), hh.q_T);
        const double qe = std::min(hh.q_T, hh.q_max);
        if (u_choice < p1e)
            q1 = qe;
        else
            q2 = qe;
    }

    if (kind == GapKind::FirstbornSecondborn) return q1 - q2;
    const bool first_is_daughter = hh.children[0].female;
    return first_is_daughter ? q1 - q2 : q2 - q1;
}

} // namespace detail

// Simulate the within-household gap distribution for one scenario over the
// two-child households of the template. DaughterSon uses mixed-gender
// households, FirstbornSecondborn uses same-gender ones. Per-household rng
// streams keep the result independent of the thread count and paired across
// scenarios run under the same seed.
inline GapDistribution simulate_gap_distribution(Scenario scen, const Theta& theta, const PolicySpec& policy,
                                                 const AbilitySource& abilities,
                                                 const std::vector<HouseholdSpec>& households,
                                                 std::uint64_t seed, GapKind kind, int threads = 1) {
    theta.validate();
    policy.validate();
    std::vector<double> gaps(households.size(), std::numeric_limits<double>::quiet_NaN());
    parallel_for(households.size(), threads, [&](std::size_t h) {
        const auto& hh = households[h];
        if (hh.n_children() != 2) return;
        const bool same = hh.same_gender();
        if (kind == GapKind::DaughterSon && same) return;
        if (kind == GapKind::FirstbornSecondborn && !same) return;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(h)));
        const double a1 = abilities.draw_a1(rng);
        const double u_nu = rng.uniform01();
        const double u_choice = rng.uniform01();
        gaps[h] = detail::scenario_gap(scen, theta, policy, abilities.dist, hh, a1, u_nu, u_choice, kind);
    });
    GapDistribution out;
    out.scenario = to_string(scen);
    out.samples.reserve(households.size());
    for (double g : gaps)
        if (!std::isnan(g)) out.samples.push_back(g);
    if (out.samples.empty())
        throw std::invalid_argument("simulate_gap_distribution: no two-child households of the requested kind");
    out.finalize();
    return out;
}

struct Cf2Result {
    GapDistribution baseline;
    GapDistribution no_disadvantage;
    GapDistribution policy;
    GapDistribution extensive_fix;
};

// The four scenario distributions of counterfactual 2 under common random
// numbers.
inline Cf2Result cf2_policy_distributions(const Theta& theta, const PolicySpec& policy,
                                          const AbilitySource& abilities,
                                          const std::vector<HouseholdSpec>& households, std::uint64_t seed,
                                          GapKind kind = GapKind::DaughterSon, int threads = 1) {
    Cf2Result r;
    r.baseline =
        simulate_gap_distribution(Scenario::Baseline, theta, policy, abilities, households, seed, kind, threads);
    r.no_disadvantage = simulate_gap_distribution(Scenario::NoDisadvantage, theta, policy, abilities, households,
                                                  seed, kind, threads);
    if (policy.is_zero()) {
        r.policy = r.baseline;  // zero cuts change nothing; keep the samples identical
        r.policy.scenario = to_string(Scenario::Policy);
    } else {
        r.policy =
            simulate_gap_distribution(Scenario::Policy, theta, policy, abilities, households, seed, kind, threads);
    }
    r.extensive_fix = simulate_gap_distribution(Scenario::ExtensiveFix, theta, policy, abilities, households,
                                                seed, kind, threads);
    return r;
}

struct Cf1Result {
    std::vector<double> ability_grid;
    std::vector<double> gap_with;      // mean gap with disadvantages
    std::vector<double> gap_without;   // mean gap with theta1 = alpha_gap = 0 and symmetric p
    std::optional<double> crossing_a1; // where gap_with crosses zero
    std::optional<double> crossing_ratio;  // a1 / (1 - a1) at the crossing
};

// Mean daughter-son gap as a function of the firstborn daughter's relative
// ability in a mixed two-child household: the high-aversion branch
// contributes the intensive split, the rest the all-or-nothing outcome with
// the educated child picked by the ability threshold.
inline Cf1Result cf1_gap_curve(const Theta& theta, const AbilityDist& dist, double q_T,
                               const std::vector<double>& ability_grid, double q_max = kDefaultQMax) {
    theta.validate();
    if (!(q_T > 0.0)) throw std::invalid_argument("cf1_gap_curve: q_T must be positive");
    for (std::size_t i = 0; i < ability_grid.size(); ++i) {
        if (!(ability_grid[i] > 0.0 && ability_grid[i] < 1.0))
            throw std::invalid_argument("cf1_gap_curve: grid values must lie in (0,1)");
        if (i > 0 && ability_grid[i] <= ability_grid[i - 1])
            throw std::invalid_argument("cf1_gap_curve: grid must be strictly increasing");
    }

    HouseholdSpec hh;
    hh.q_T = q_T;
    hh.q_max = q_max;
    hh.children = {ChildSpec{true, 1, 0.5}, ChildSpec{false, 2, 0.5}};

    auto mean_gap = [&](double a1, const Theta& th, double t_choice) {
        hh.children[0].ability = a1;
        hh.children[1].ability = 1.0 - a1;
        const auto alloc = solve_allocation(hh, th, {true, true});
        const double gap_int = alloc.years[0] - alloc.years[1];
        const double qe = std::min(q_T, q_max);
        const double gap_ext = a1 >= t_choice ? qe : -qe;
        return th.p_high_aversion * gap_int + (1.0 - th.p_high_aversion) * gap_ext;
    };

    Theta no_dis = theta;
    no_dis.theta1 = 0.0;
    no_dis.alpha_gap = 0.0;
    const double t_with = theta.p_fb_d > 0.0 && theta.p_fb_d < 1.0 ? threshold_from_p(theta.p_fb_d, dist) : 0.5;

    Cf1Result r;
    r.ability_grid = ability_grid;
    for (double a1 : ability_grid) {
        r.gap_with.push_back(mean_gap(a1, theta, t_with));
        r.gap_without.push_back(mean_gap(a1, no_dis, 0.5));
    }
    for (std::size_t i = 0; i + 1 < r.gap_with.size(); ++i) {
        const double g0 = r.gap_with[i], g1 = r.gap_with[i + 1];
        if (g0 == 0.0) {
            r.crossing_a1 = ability_grid[i];
        } else if (g0 < 0.0 && g1 >= 0.0) {
            const double t = g1 == g0 ? 0.0 : -g0 / (g1 - g0);
            r.crossing_a1 = ability_grid[i] + t * (ability_grid[i + 1] - ability_grid[i]);
        }
        if (r.crossing_a1) break;
    }
    if (r.crossing_a1) r.crossing_ratio = *r.crossing_a1 / (1.0 - *r.crossing_a1);
    return r;
}

struct Cf3Result {
    GapDistribution before;
    GapDistribution after;
    double mean_before = 0.0;
    double mean_after = 0.0;
    double capped_share = 0.0;  // households whose scaled budget hit n_c * q_max
    bool cap_warning = false;   // more than half of the households saturated
};

// Non-targeted resource increase: every budget is scaled by qbar_to/qbar_from
// (capped at n_c * q_max) and the model is re-solved at the same theta.
inline Cf3Result cf3_resource_increase(const Theta& theta, const AbilitySource& abilities,
                                       const std::vector<HouseholdSpec>& households, double qbar_from,
                                       double qbar_to, std::uint64_t seed,
                                       GapKind kind = GapKind::DaughterSon, int threads = 1) {
    if (!(qbar_from > 0.0) || !(qbar_to >= qbar_from))
        throw std::invalid_argument("cf3_resource_increase: need qbar_to >= qbar_from > 0");
    const double scale = qbar_to / qbar_from;

    std::vector<HouseholdSpec> scaled = households;
    std::int64_t capped = 0, total = 0;
    for (auto& hh : scaled) {
        const double cap = hh.q_max * hh.n_children();
        const double want = hh.q_T * scale;
        hh.q_T = std::min(want, cap);
        ++total;
        if (want > cap) ++capped;
    }

    PolicySpec none;
    Cf3Result r;
    r.before =
        simulate_gap_distribution(Scenario::Baseline, theta, none, abilities, households, seed, kind, threads);
    r.before.scenario = "before";
    r.after = simulate_gap_distribution(Scenario::Baseline, theta, none, abilities, scaled, seed, kind, threads);
    r.after.scenario = "after";
    r.mean_before = r.before.mean();
    r.mean_after = r.after.mean();
    r.capped_share = total > 0 ? static_cast<double>(capped) / static_cast<double>(total) : 0.0;
    r.cap_warning = r.capped_share > 0.5;
    return r;
}

} // namespace edualloc
