#pragma once

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/types.hpp"

// Descriptive inequality statistics and the moment vector matched by the
// estimator. Everything here is a pure reduction over household outcomes;
// the population-variance convention (divide by n) is used throughout so the
// within/between identity holds exactly.

namespace edualloc {

struct InequalityStats {
    double total_var = 0.0;
    double between_var = 0.0;
    double within_var_mean = 0.0;  // E_h Var(q | h), households weighted by child count
    double within_share = 0.0;
    double avg_range = 0.0;
    double avg_sd = 0.0;
    double avg_qbar = 0.0;
    double avg_qT = 0.0;
    std::int64_t n_households = 0;
    std::int64_t n_children = 0;
};

struct HouseholdInequality {
    std::string id;
    double range = 0.0;
    double sd = 0.0;
    double qbar = 0.0;
    double q_T = 0.0;
};

// Matched moments for one stratum.
//   m1        daughters' mean education: only-daughter households minus mixed
//   m2        share of educated firstborns, same-gender households
//   m3        share of educated daughters, mixed with firstborn daughter
//   m4        share of educated daughters, mixed with firstborn son
//   m_birth_* adjacent birth-order differences E[Y_{t+1}] - E[Y_t], same-gender
// m2-m4 are measured among households with exactly one educated child (the
// subpopulation the extensive-margin Bernoullis govern), which is what lets
// the estimator zero those gaps exactly by direct inversion.
struct MomentVector {
    double m1 = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    std::vector<double> m_birth_d;
    std::vector<double> m_birth_s;
    Stratum stratum;

    std::vector<double> flatten() const {
        std::vector<double> v{m1, m2, m3, m4};
        v.insert(v.end(), m_birth_d.begin(), m_birth_d.end());
        v.insert(v.end(), m_birth_s.begin(), m_birth_s.end());
        return v;
    }

    static std::vector<std::string> component_names(int n_c) {
        std::vector<std::string> names{"m1", "m2", "m3", "m4"};
        for (int t = 1; t < n_c; ++t) names.push_back("m_birth_d" + std::to_string(t));
        for (int t = 1; t < n_c; ++t) names.push_back("m_birth_s" + std::to_string(t));
        return names;
    }
};

template <typename Range>
InequalityStats variance_decomposition(const Range& pop) {
    double sum = 0.0;
    std::int64_t n = 0;
    std::int64_t n_h = 0;
    for (const auto& hh : pop) {
        if (hh.children.size() < 2)
            throw std::invalid_argument("variance_decomposition: household '" + hh.id +
                                        "' has fewer than 2 children");
        ++n_h;
        for (const auto& c : hh.children) {
            sum += c.years;
            ++n;
        }
    }
    if (n_h < 2) throw std::invalid_argument("variance_decomposition: need at least 2 households");
    const double grand = sum / static_cast<double>(n);

    InequalityStats st;
    st.n_households = n_h;
    st.n_children = n;
    for (const auto& hh : pop) {
        const double nh = static_cast<double>(hh.children.size());
        double hsum = 0.0;
        double lo = hh.children[0].years, hi = hh.children[0].years;
        for (const auto& c : hh.children) {
            hsum += c.years;
            lo = std::min(lo, c.years);
            hi = std::max(hi, c.years);
        }
        const double hmean = hsum / nh;
        double hvar = 0.0;
        for (const auto& c : hh.children) {
            hvar += (c.years - hmean) * (c.years - hmean);
            st.total_var += (c.years - grand) * (c.years - grand);
        }
        hvar /= nh;
        st.within_var_mean += nh * hvar;
        st.between_var += nh * (hmean - grand) * (hmean - grand);
        st.avg_range += hi - lo;
        st.avg_sd += std::sqrt(hvar);
        st.avg_qbar += hmean;
        st.avg_qT += hsum;
    }
    const double N = static_cast<double>(n);
    const double H = static_cast<double>(n_h);
    st.total_var /= N;
    st.within_var_mean /= N;
    st.between_var /= N;
    st.within_share = st.total_var > 0.0 ? st.within_var_mean / st.total_var : 0.0;
    st.avg_range /= H;
    st.avg_sd /= H;
    st.avg_qbar /= H;
    st.avg_qT /= H;
    return st;
}

template <typename Range>
std::vector<HouseholdInequality> inequality_stats(const Range& pop) {
    std::vector<HouseholdInequality> out;
    for (const auto& hh : pop) {
        if (hh.children.empty()) throw std::invalid_argument("inequality_stats: empty household");
        const double nh = static_cast<double>(hh.children.size());
        double hsum = 0.0, lo = hh.children[0].years, hi = hh.children[0].years;
        for (const auto& c : hh.children) {
            hsum += c.years;
            lo = std::min(lo, c.years);
            hi = std::max(hi, c.years);
        }
        const double hmean = hsum / nh;
        double hvar = 0.0;
        for (const auto& c : hh.children) hvar += (c.years - hmean) * (c.years - hmean);
        hvar /= nh;
        out.push_back({hh.id, hi - lo, std::sqrt(hvar), hmean, hsum});
    }
    return out;
}

// Share of stratum households with every child educated. In the model this
// identifies the high-aversion share directly.
template <typename Range>
double share_all_educated(const Range& pop, const Stratum& stratum) {
    std::int64_t n = 0, all = 0;
    for (const auto& hh : pop) {
        if (hh.stratum() != stratum) continue;
        ++n;
        if (hh.n_educated() == hh.n_children()) ++all;
    }
    if (n == 0) throw std::invalid_argument("share_all_educated: stratum " + stratum.label() + " is empty");
    return static_cast<double>(all) / static_cast<double>(n);
}

template <typename Range>
MomentVector compute_moment_vector(const Range& pop, const Stratum& stratum) {
    const int nc = stratum.n_c;
    MomentVector mv;
    mv.stratum = stratum;

    double yd_same = 0.0;  // daughters' years, only-daughter households
    std::int64_t nd_same = 0;
    double yd_mixed = 0.0;
    std::int64_t nd_mixed = 0;
    std::vector<double> ysum_d(static_cast<std::size_t>(nc), 0.0);  // by birth order, only-daughters
    std::vector<double> ysum_s(static_cast<std::size_t>(nc), 0.0);  // by birth order, only-sons
    std::int64_t n_dd = 0, n_ss = 0;
    std::int64_t ext_same = 0, ext_same_fb = 0;
    std::int64_t ext_fbd = 0, ext_fbd_d = 0;
    std::int64_t ext_fbs = 0, ext_fbs_d = 0;
    std::int64_t n_mixed = 0;

    for (const auto& hh : pop) {
        if (hh.stratum() != stratum) continue;
        const bool same = hh.same_gender();
        const bool only_d = same && hh.children[0].female;
        const int educated = hh.n_educated();

        if (only_d) {
            ++n_dd;
            for (const auto& c : hh.children) {
                yd_same += c.years;
                ++nd_same;
                ysum_d[static_cast<std::size_t>(c.birth_order - 1)] += c.years;
            }
        } else if (same) {
            ++n_ss;
            for (const auto& c : hh.children)
                ysum_s[static_cast<std::size_t>(c.birth_order - 1)] += c.years;
        } else {
            ++n_mixed;
            for (const auto& c : hh.children)
                if (c.female) {
                    yd_mixed += c.years;
                    ++nd_mixed;
                }
        }

        if (educated == 1) {
            if (same) {
                ++ext_same;
                if (hh.children[0].years > 0.0) ++ext_same_fb;
            } else if (nc == 2) {
                const bool fb_daughter = hh.children[0].female;
                const int daughter = fb_daughter ? 0 : 1;
                if (fb_daughter) {
                    ++ext_fbd;
                    if (hh.children[static_cast<std::size_t>(daughter)].years > 0.0) ++ext_fbd_d;
                } else {
                    ++ext_fbs;
                    if (hh.children[static_cast<std::size_t>(daughter)].years > 0.0) ++ext_fbs_d;
                }
            }
        }
    }

    auto require = [&](bool ok, const std::string& cell) {
        if (!ok)
            throw std::invalid_argument("compute_moment_vector: stratum " + stratum.label() +
                                        " has no households in cell '" + cell + "'");
    };
    require(n_dd > 0, "only-daughters");
    require(n_ss > 0, "only-sons");
    require(nd_mixed > 0, "mixed-gender");
    require(ext_same > 0, "same-gender with exactly one educated child");
    if (nc == 2) {
        require(ext_fbd > 0, "firstborn-daughter with exactly one educated child");
        require(ext_fbs > 0, "firstborn-son with exactly one educated child");
    }

    mv.m1 = yd_same / static_cast<double>(nd_same) - yd_mixed / static_cast<double>(nd_mixed);
    mv.m2 = static_cast<double>(ext_same_fb) / static_cast<double>(ext_same);
    if (nc == 2) {
        mv.m3 = static_cast<double>(ext_fbd_d) / static_cast<double>(ext_fbd);
        mv.m4 = static_cast<double>(ext_fbs_d) / static_cast<double>(ext_fbs);
    }
    for (int t = 0; t + 1 < nc; ++t) {
        mv.m_birth_d.push_back((ysum_d[t + 1] - ysum_d[t]) / static_cast<double>(n_dd));
        mv.m_birth_s.push_back((ysum_s[t + 1] - ysum_s[t]) / static_cast<double>(n_ss));
    }
    return mv;
}

// Strata present in a population, in a stable order.
template <typename Range>
std::vector<Stratum> list_strata(const Range& pop) {
    std::set<std::pair<int, int>> seen;
    std::vector<Stratum> out;
    for (const auto& hh : pop) {
        const Stratum s = hh.stratum();
        if (seen.insert({static_cast<int>(s.parent_educ), s.n_c}).second) out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const Stratum& a, const Stratum& b) {
        return std::pair(static_cast<int>(a.parent_educ), a.n_c) <
               std::pair(static_cast<int>(b.parent_educ), b.n_c);
    });
    return out;
}

} // namespace edualloc
