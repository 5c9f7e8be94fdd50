#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "edualloc/ability.hpp"
#include "edualloc/csv.hpp"
#include "edualloc/model.hpp"
#include "edualloc/parallel.hpp"
#include "edualloc/rng.hpp"
#include "edualloc/types.hpp"

// Synthetic population generation and household-file ingestion. The observable
// mix (family size, gender composition, budgets, parent education) is supplied
// by configuration; abilities are attached under the sum-to-one constraint.

namespace edualloc {

struct ChildRecord {
    std::string household_id;
    std::string child_id;
    bool female = false;
    int birth_order = 1;
    double educ_years = 0.0;
    int n_c = 2;
    ParentEduc parent_educ = ParentEduc::None;
};

// Budget sampler for one parent-education stratum.
struct QtSampler {
    enum class Kind { Discrete, Normal, Uniform };
    Kind kind = Kind::Normal;
    std::vector<double> values;   // Discrete
    std::vector<double> weights;  // Discrete
    double mean = 18.0, sd = 5.0; // Normal (clamped to [min,max])
    double min = 2.0, max = 42.0;
    bool round_to_int = true;

    void validate() const {
        if (kind == Kind::Discrete) {
            if (values.empty() || values.size() != weights.size())
                throw std::invalid_argument("q_T sampler: values/weights size mismatch");
            double s = 0.0;
            for (double w : weights) {
                if (w < 0.0) throw std::invalid_argument("q_T sampler: negative weight");
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("q_T sampler: weights must sum to 1");
        } else {
            if (!(max > min) || min < 0.0) throw std::invalid_argument("q_T sampler: need 0 <= min < max");
            if (kind == Kind::Normal && !(sd > 0.0)) throw std::invalid_argument("q_T sampler: sd must be > 0");
        }
    }

    double sample(Rng& rng) const {
        double q = 0.0;
        switch (kind) {
            case Kind::Discrete: {
                const double u = rng.uniform01();
                double acc = 0.0;
                q = values.back();
                for (std::size_t i = 0; i < values.size(); ++i) {
                    acc += weights[i];
                    if (u < acc) {
                        q = values[i];
                        break;
                    }
                }
                break;
            }
            case Kind::Normal: q = std::clamp(rng.normal(mean, sd), min, max); break;
            case Kind::Uniform: q = rng.uniform(min, max); break;
        }
        return round_to_int ? std::round(q) : q;
    }
};

struct PopulationConfig {
    std::int64_t n_households = 0;
    std::map<int, double> nc_weights = {{2, 1.0}};                 // over {2,3}
    std::map<std::string, double> gender_comp_weights = {          // composition strings, d/s by birth order
        {"dd", 0.25}, {"ds", 0.25}, {"sd", 0.25}, {"ss", 0.25}};
    std::map<ParentEduc, double> parent_educ_weights = {{ParentEduc::None, 1.0}};
    std::map<ParentEduc, QtSampler> q_T_sampler = {{ParentEduc::None, QtSampler{}}};
    AbilityDist ability{};
    double q_max = kDefaultQMax;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_households <= 0) throw std::invalid_argument("population: n_households must be positive");
        auto check_weights = [](const auto& m, const char* what) {
            double s = 0.0;
            for (const auto& [k, w] : m) {
                (void)k;
                if (w < 0.0) throw std::invalid_argument(std::string("population: negative weight in ") + what);
                s += w;
            }
            if (std::abs(s - 1.0) > 1e-6)
                throw std::invalid_argument(std::string("population: ") + what + " must sum to 1");
        };
        check_weights(nc_weights, "nc_weights");
        check_weights(gender_comp_weights, "gender_comp_weights");
        check_weights(parent_educ_weights, "parent_educ_weights");
        for (const auto& [nc, w] : nc_weights) {
            if (nc != 2 && nc != 3) throw std::invalid_argument("population: nc_weights keys must be 2 or 3");
            if (w <= 0.0) continue;
            bool any = false;
            for (const auto& [comp, cw] : gender_comp_weights)
                if (static_cast<int>(comp.size()) == nc && cw > 0.0) any = true;
            if (!any)
                throw std::invalid_argument("population: no gender composition of size " + std::to_string(nc));
        }
        for (const auto& [comp, w] : gender_comp_weights) {
            (void)w;
            if (comp.size() != 2 && comp.size() != 3)
                throw std::invalid_argument("population: composition '" + comp + "' must have 2 or 3 children");
            for (char c : comp)
                if (c != 'd' && c != 's')
                    throw std::invalid_argument("population: composition '" + comp + "' may only contain d/s");
        }
        for (const auto& [pe, w] : parent_educ_weights)
            if (w > 0.0 && !q_T_sampler.count(pe))
                throw std::invalid_argument(std::string("population: missing q_T sampler for stratum ") +
                                            to_string(pe));
        for (const auto& [pe, s] : q_T_sampler) {
            (void)pe;
            s.validate();
        }
        ability.validate();
        if (!(q_max > 0.0)) throw std::invalid_argument("population: q_max must be positive");
    }
};

namespace detail {

template <typename K>
K pick_weighted(const std::map<K, double>& weights, double u) {
    double acc = 0.0;
    K last{};
    for (const auto& [k, w] : weights) {
        last = k;
        acc += w;
        if (u < acc) return k;
    }
    return last;
}

inline std::string pick_composition(const std::map<std::string, double>& weights, int nc, double u) {
    double total = 0.0;
    for (const auto& [comp, w] : weights)
        if (static_cast<int>(comp.size()) == nc) total += w;
    double acc = 0.0;
    std::string last;
    for (const auto& [comp, w] : weights) {
        if (static_cast<int>(comp.size()) != nc) continue;
        last = comp;
        acc += w / total;
        if (u < acc) return comp;
    }
    return last;
}

} // namespace detail

// Deterministic given the seed: household h is built from its own derived
// stream, so generation may be chunked or parallelized freely.
inline std::vector<HouseholdSpec> generate_population(const PopulationConfig& cfg) {
    cfg.validate();
    std::vector<HouseholdSpec> out(static_cast<std::size_t>(cfg.n_households));
    for (std::int64_t h = 0; h < cfg.n_households; ++h) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(h)));
        HouseholdSpec& hh = out[static_cast<std::size_t>(h)];
        hh.parent_educ = detail::pick_weighted(cfg.parent_educ_weights, rng.uniform01());
        const int nc = detail::pick_weighted(cfg.nc_weights, rng.uniform01());
        const std::string comp = detail::pick_composition(cfg.gender_comp_weights, nc, rng.uniform01());
        hh.q_max = cfg.q_max;
        const auto& sampler = cfg.q_T_sampler.at(hh.parent_educ);
        do {
            hh.q_T = sampler.sample(rng);
        } while (hh.q_T > nc * cfg.q_max);
        const auto abilities = sample_ability_vector(nc, cfg.ability, rng);
        hh.children.resize(nc);
        for (int i = 0; i < nc; ++i)
            hh.children[i] = ChildSpec{comp[static_cast<std::size_t>(i)] == 'd', i + 1, abilities[i]};
    }
    return out;
}

inline constexpr const char* kHouseholdCsvHeader =
    "household_id,child_id,female,birth_order,educ_years,n_c,parent_educ";

// Household CSV -> outcomes grouped by household, with per-line diagnostics.
inline std::vector<HouseholdOutcome> load_population(const std::string& path, double q_max = kDefaultQMax) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) reader.fail("empty file");
    {
        const auto header = csv::split_line(kHouseholdCsvHeader);
        if (fields != header) reader.fail(std::string("header must be exactly '") + kHouseholdCsvHeader + "'");
    }

    std::map<std::string, HouseholdOutcome> by_id;
    std::map<std::string, int> declared_nc;
    std::map<std::string, std::set<int>> seen_orders;
    std::vector<std::string> insertion_order;

    while (reader.next(fields)) {
        if (fields.size() != 7) reader.fail("expected 7 fields, got " + std::to_string(fields.size()));
        ChildRecord rec;
        rec.household_id = fields[0];
        rec.child_id = fields[1];
        const long female = csv::parse_long(reader, fields[2], "female");
        if (female != 0 && female != 1) reader.fail("female must be 0 or 1");
        rec.female = female == 1;
        rec.birth_order = static_cast<int>(csv::parse_long(reader, fields[3], "birth_order"));
        if (rec.birth_order < 1) reader.fail("birth_order must be >= 1");
        rec.educ_years = csv::parse_double(reader, fields[4], "educ_years");
        if (rec.educ_years < 0.0 || rec.educ_years > q_max)
            reader.fail("educ_years " + fields[4] + " outside [0, " + std::to_string(q_max) + "]");
        rec.n_c = static_cast<int>(csv::parse_long(reader, fields[5], "n_c"));
        try {
            rec.parent_educ = parent_educ_from_string(fields[6]);
        } catch (const std::exception& e) {
            reader.fail(e.what());
        }

        auto [it, inserted] = by_id.try_emplace(rec.household_id);
        if (inserted) {
            insertion_order.push_back(rec.household_id);
            it->second.id = rec.household_id;
            it->second.parent_educ = rec.parent_educ;
            declared_nc[rec.household_id] = rec.n_c;
        } else {
            if (declared_nc[rec.household_id] != rec.n_c)
                reader.fail("household '" + rec.household_id + "' has inconsistent n_c");
            if (it->second.parent_educ != rec.parent_educ)
                reader.fail("household '" + rec.household_id + "' has inconsistent parent_educ");
        }
        if (!seen_orders[rec.household_id].insert(rec.birth_order).second)
            reader.fail("household '" + rec.household_id + "' has duplicate birth_order " +
                        std::to_string(rec.birth_order));
        it->second.children.push_back(ChildOutcome{rec.female, rec.birth_order, rec.educ_years});
    }

    std::vector<HouseholdOutcome> out;
    out.reserve(insertion_order.size());
    for (const auto& id : insertion_order) {
        auto& hh = by_id[id];
        std::sort(hh.children.begin(), hh.children.end(),
                  [](const ChildOutcome& a, const ChildOutcome& b) { return a.birth_order < b.birth_order; });
        if (static_cast<int>(hh.children.size()) != declared_nc[id])
            throw std::runtime_error(path + ": household '" + id + "' declares n_c=" +
                                     std::to_string(declared_nc[id]) + " but has " +
                                     std::to_string(hh.children.size()) + " rows");
        out.push_back(std::move(hh));
    }
    return out;
}

inline void save_population(const std::vector<HouseholdOutcome>& pop, std::ostream& os) {
    os << kHouseholdCsvHeader << "\n";
    for (const auto& hh : pop) {
        for (const auto& c : hh.children) {
            std::ostringstream years;
            years.precision(12);
            years << c.years;
            os << hh.id << ',' << hh.id << "-c" << c.birth_order << ',' << (c.female ? 1 : 0) << ','
               << c.birth_order << ',' << years.str() << ',' << hh.children.size() << ','
               << to_string(hh.parent_educ) << "\n";
        }
    }
}

// Single-column score file for ability/GPA samples.
inline std::vector<double> load_scores(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) reader.fail("empty file");
    if (fields.size() != 1 || fields[0] != "score") reader.fail("header must be exactly 'score'");
    std::vector<double> out;
    while (reader.next(fields)) {
        if (fields.size() != 1) reader.fail("expected 1 field");
        out.push_back(csv::parse_double(reader, fields[0], "score"));
    }
    return out;
}

// Simulate outcomes for generated households; rounding mirrors how years are
// reported in files (half-up), the model itself stays continuous. Households
// own derived rng streams, so the result is the same for any thread count.
inline std::vector<HouseholdOutcome> simulate_population(const std::vector<HouseholdSpec>& specs,
                                                         const Theta& theta, std::uint64_t seed,
                                                         bool round_years = false, int threads = 1) {
    std::vector<HouseholdOutcome> out(specs.size());
    parallel_for(specs.size(), threads, [&](std::size_t h) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(h)));
        const auto alloc = simulate_household(specs[h], theta, rng);
        HouseholdOutcome& rec = out[h];
        rec.id = "h" + std::to_string(h);
        rec.parent_educ = specs[h].parent_educ;
        rec.children.resize(specs[h].children.size());
        for (std::size_t i = 0; i < specs[h].children.size(); ++i) {
            const double y = round_years ? std::floor(alloc.years[i] + 0.5) : alloc.years[i];
            rec.children[i] = ChildOutcome{specs[h].children[i].female, specs[h].children[i].birth_order, y};
        }
    });
    return out;
}

} // namespace edualloc
