#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace edualloc {

inline constexpr double kDefaultQMax = 21.0;

enum class ParentEduc { None, Primary, Junior, Senior, College };

inline const char* to_string(ParentEduc e) {
    switch (e) {
        case ParentEduc::None: return "none";
        case ParentEduc::Primary: return "primary";
        case ParentEduc::Junior: return "junior";
        case ParentEduc::Senior: return "senior";
        case ParentEduc::College: return "college";
    }
    return "none";
}

inline ParentEduc parent_educ_from_string(const std::string& s) {
    if (s == "none") return ParentEduc::None;
    if (s == "primary") return ParentEduc::Primary;
    if (s == "junior") return ParentEduc::Junior;
    if (s == "senior") return ParentEduc::Senior;
    if (s == "college") return ParentEduc::College;
    throw std::invalid_argument("unknown parent_educ: '" + s + "'");
}

// Stratum at the grain the moments condition on: parent education x family size.
struct Stratum {
    ParentEduc parent_educ = ParentEduc::None;
    int n_c = 2;

    bool operator==(const Stratum&) const = default;
    std::string label() const { return std::string(to_string(parent_educ)) + "/nc" + std::to_string(n_c); }
};

struct ChildSpec {
    bool female = false;
    int birth_order = 1;     // 1 = firstborn
    double ability = 0.5;    // relative ability a_i, household abilities sum to 1
};

// Two-child gender compositions, in birth order. OnlyDaughters/OnlySons are the
// s_h households; the mixed ones carry which gender was born first.
enum class Comp2 { OnlyDaughters, OnlySons, FirstbornDaughter, FirstbornSon };

struct HouseholdSpec {
    std::vector<ChildSpec> children;   // sorted by birth order
    double q_T = 0.0;                  // total years of education to distribute
    double q_max = kDefaultQMax;       // per-child cap
    ParentEduc parent_educ = ParentEduc::None;

    int n_children() const { return static_cast<int>(children.size()); }

    bool same_gender() const {
        for (std::size_t i = 1; i < children.size(); ++i)
            if (children[i].female != children[0].female) return false;
        return true;
    }

    bool mixed_gender() const { return !same_gender(); }

    Comp2 composition2() const {
        if (children.size() != 2) throw std::invalid_argument("composition2 requires exactly 2 children");
        if (same_gender()) return children[0].female ? Comp2::OnlyDaughters : Comp2::OnlySons;
        return children[0].female ? Comp2::FirstbornDaughter : Comp2::FirstbornSon;
    }

    Stratum stratum() const { return Stratum{parent_educ, n_children()}; }

    void validate() const {
        const int n = n_children();
        if (n < 2 || n > 3)
            throw std::invalid_argument("household must have 2 or 3 children, got " + std::to_string(n));
        if (q_T < 0.0) throw std::invalid_argument("q_T must be >= 0");
        if (q_max <= 0.0) throw std::invalid_argument("q_max must be > 0");
        if (q_T > n * q_max + 1e-9)
            throw std::invalid_argument("q_T exceeds n_c * q_max");
        double asum = 0.0;
        for (int i = 0; i < n; ++i) {
            if (children[i].birth_order != i + 1)
                throw std::invalid_argument("children must be listed in birth order 1..n_c");
            asum += children[i].ability;
        }
        if (std::abs(asum - 1.0) > 1e-9)
            throw std::invalid_argument("child abilities must sum to 1");
    }
};

struct Allocation {
    std::vector<double> years;     // q_i, zero where not educated
    std::vector<bool> educated;    // extensive-margin mask

    double total() const {
        double s = 0.0;
        for (double q : years) s += q;
        return s;
    }
};

// Observed (or simulated) household outcome: what the data files carry and
// what the moments/regressions consume.
struct ChildOutcome {
    bool female = false;
    int birth_order = 1;
    double years = 0.0;
};

struct HouseholdOutcome {
    std::string id;
    ParentEduc parent_educ = ParentEduc::None;
    std::vector<ChildOutcome> children;   // sorted by birth order

    int n_children() const { return static_cast<int>(children.size()); }
    double q_T() const {
        double s = 0.0;
        for (const auto& c : children) s += c.years;
        return s;
    }
    bool same_gender() const {
        for (std::size_t i = 1; i < children.size(); ++i)
            if (children[i].female != children[0].female) return false;
        return true;
    }
    int n_educated() const {
        int k = 0;
        for (const auto& c : children) k += (c.years > 0.0) ? 1 : 0;
        return k;
    }
    Stratum stratum() const { return Stratum{parent_educ, n_children()}; }
};

// Thrown when the optimizer runs out of budget before the objective settles.
class NonConvergenceError : public std::runtime_error {
public:
    NonConvergenceError(std::string msg, std::vector<double> best_point, double best_value)
        : std::runtime_error(std::move(msg)), best_point(std::move(best_point)), best_value(best_value) {}
    std::vector<double> best_point;
    double best_value;
};

} // namespace edualloc
