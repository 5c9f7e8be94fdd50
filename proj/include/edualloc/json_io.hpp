#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "edualloc/ability.hpp"
#include "edualloc/counterfactual.hpp"
#include "edualloc/estimator.hpp"
#include "edualloc/model.hpp"
#include "edualloc/moments.hpp"
#include "edualloc/population.hpp"
#include "edualloc/regress.hpp"
#include "edualloc/rng.hpp"
#include "edualloc/version.hpp"

// JSON codecs for configs and results. Config parsing is strict: unknown keys
// are rejected so typos fail loudly instead of silently using defaults.
// ordered_json keeps key order stable, which keeps outputs byte-reproducible.

namespace edualloc {

using json = nlohmann::ordered_json;

namespace jsondetail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

} // namespace jsondetail

inline json theta_to_json(const Theta& t) {
    return json{{"theta1", t.theta1},
                {"alpha_gap", t.alpha_gap},
                {"p1", t.p1},
                {"p_fb_d", t.p_fb_d},
                {"p_sb_d", t.p_sb_d},
                {"gamma", t.gamma},
                {"p_high_aversion", t.p_high_aversion},
                {"p_medium_aversion", t.p_medium_aversion},
                {"alpha_base", t.alpha_base},
                {"p_low_child", t.p_low_child},
                {"p_medium_pair", t.p_medium_pair}};
}

inline Theta theta_from_json(const json& j) {
    jsondetail::require_keys(j,
                             {"theta1", "alpha_gap", "p1", "p_fb_d", "p_sb_d", "gamma", "p_high_aversion",
                              "p_medium_aversion", "alpha_base", "p_low_child", "p_medium_pair"},
                             "theta");
    Theta t;
    t.theta1 = jsondetail::get_or(j, "theta1", t.theta1);
    t.alpha_gap = jsondetail::get_or(j, "alpha_gap", t.alpha_gap);
    t.p1 = jsondetail::get_or(j, "p1", t.p1);
    t.p_fb_d = jsondetail::get_or(j, "p_fb_d", t.p_fb_d);
    t.p_sb_d = jsondetail::get_or(j, "p_sb_d", t.p_sb_d);
    t.gamma = jsondetail::get_or(j, "gamma", t.gamma);
    t.p_high_aversion = jsondetail::get_or(j, "p_high_aversion", t.p_high_aversion);
    t.p_medium_aversion = jsondetail::get_or(j, "p_medium_aversion", t.p_medium_aversion);
    t.alpha_base = jsondetail::get_or(j, "alpha_base", t.alpha_base);
    t.p_low_child = jsondetail::get_or(j, "p_low_child", t.p_low_child);
    t.p_medium_pair = jsondetail::get_or(j, "p_medium_pair", t.p_medium_pair);
    t.validate();
    return t;
}

inline json ability_to_json(const AbilityDist& d) { return json{{"beta1", d.beta1}, {"beta2", d.beta2}}; }

inline AbilityDist ability_from_json(const json& j) {
    jsondetail::require_keys(j, {"beta1", "beta2"}, "ability");
    AbilityDist d;
    d.beta1 = jsondetail::get_or(j, "beta1", d.beta1);
    d.beta2 = jsondetail::get_or(j, "beta2", d.beta2);
    d.validate();
    return d;
}

inline QtSampler qt_sampler_from_json(const json& j) {
    jsondetail::require_keys(j, {"type", "values", "weights", "mean", "sd", "min", "max", "round_to_int"},
                             "q_T sampler");
    QtSampler s;
    const std::string type = jsondetail::get_or<std::string>(j, "type", "normal");
    if (type == "discrete")
        s.kind = QtSampler::Kind::Discrete;
    else if (type == "normal")
        s.kind = QtSampler::Kind::Normal;
    else if (type == "uniform")
        s.kind = QtSampler::Kind::Uniform;
    else
        throw std::invalid_argument("q_T sampler: unknown type '" + type + "'");
    s.values = jsondetail::get_or(j, "values", s.values);
    s.weights = jsondetail::get_or(j, "weights", s.weights);
    s.mean = jsondetail::get_or(j, "mean", s.mean);
    s.sd = jsondetail::get_or(j, "sd", s.sd);
    s.min = jsondetail::get_or(j, "min", s.min);
    s.max = jsondetail::get_or(j, "max", s.max);
    s.round_to_int = jsondetail::get_or(j, "round_to_int", s.round_to_int);
    s.validate();
    return s;
}

inline json qt_sampler_to_json(const QtSampler& s) {
    json j;
    switch (s.kind) {
        case QtSampler::Kind::Discrete: j["type"] = "discrete"; j["values"] = s.values; j["weights"] = s.weights; break;
        case QtSampler::Kind::Normal: j["type"] = "normal"; j["mean"] = s.mean; j["sd"] = s.sd; break;
        case QtSampler::Kind::Uniform: j["type"] = "uniform"; break;
    }
    if (s.kind != QtSampler::Kind::Discrete) {
        j["min"] = s.min;
        j["max"] = s.max;
    }
    j["round_to_int"] = s.round_to_int;
    return j;
}

inline PopulationConfig population_config_from_json(const json& j) {
    jsondetail::require_keys(j,
                             {"n_households", "nc_weights", "gender_comp_weights", "parent_educ_weights",
                              "q_T_sampler", "ability", "q_max", "seed"},
                             "population");
    PopulationConfig cfg;
    cfg.n_households = jsondetail::get_or<std::int64_t>(j, "n_households", cfg.n_households);
    if (j.contains("nc_weights")) {
        cfg.nc_weights.clear();
        for (const auto& [k, v] : j.at("nc_weights").items()) cfg.nc_weights[std::stoi(k)] = v.get<double>();
    }
    if (j.contains("gender_comp_weights")) {
        cfg.gender_comp_weights.clear();
        for (const auto& [k, v] : j.at("gender_comp_weights").items()) cfg.gender_comp_weights[k] = v.get<double>();
    }
    if (j.contains("parent_educ_weights")) {
        cfg.parent_educ_weights.clear();
        for (const auto& [k, v] : j.at("parent_educ_weights").items())
            cfg.parent_educ_weights[parent_educ_from_string(k)] = v.get<double>();
    }
    if (j.contains("q_T_sampler")) {
        cfg.q_T_sampler.clear();
        for (const auto& [k, v] : j.at("q_T_sampler").items())
            cfg.q_T_sampler[parent_educ_from_string(k)] = qt_sampler_from_json(v);
    }
    if (j.contains("ability")) cfg.ability = ability_from_json(j.at("ability"));
    cfg.q_max = jsondetail::get_or(j, "q_max", cfg.q_max);
    cfg.seed = jsondetail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

inline json population_config_to_json(const PopulationConfig& cfg) {
    json nc, comp, pe, qt;
    for (const auto& [k, v] : cfg.nc_weights) nc[std::to_string(k)] = v;
    for (const auto& [k, v] : cfg.gender_comp_weights) comp[k] = v;
    for (const auto& [k, v] : cfg.parent_educ_weights) pe[to_string(k)] = v;
    for (const auto& [k, v] : cfg.q_T_sampler) qt[to_string(k)] = qt_sampler_to_json(v);
    return json{{"n_households", cfg.n_households},
                {"nc_weights", nc},
                {"gender_comp_weights", comp},
                {"parent_educ_weights", pe},
                {"q_T_sampler", qt},
                {"ability", ability_to_json(cfg.ability)},
                {"q_max", cfg.q_max},
                {"seed", cfg.seed}};
}

inline EstimationConfig estimation_config_from_json(const json& j) {
    jsondetail::require_keys(j,
                             {"s", "simulated_households", "max_evaluations", "bootstrap_replications",
                              "fd_step_rel", "fd_step_floor", "seed", "ability", "gamma", "alpha_base",
                              "theta1_min", "theta1_max", "alpha_gap_min", "alpha_gap_max",
                              "min_extensive_households"},
                             "estimation");
    EstimationConfig cfg;
    cfg.s = jsondetail::get_or(j, "s", cfg.s);
    cfg.simulated_households = jsondetail::get_or(j, "simulated_households", cfg.simulated_households);
    cfg.max_evaluations = jsondetail::get_or(j, "max_evaluations", cfg.max_evaluations);
    cfg.bootstrap_replications = jsondetail::get_or(j, "bootstrap_replications", cfg.bootstrap_replications);
    cfg.fd_step_rel = jsondetail::get_or(j, "fd_step_rel", cfg.fd_step_rel);
    cfg.fd_step_floor = jsondetail::get_or(j, "fd_step_floor", cfg.fd_step_floor);
    cfg.seed = jsondetail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    if (j.contains("ability")) cfg.ability = ability_from_json(j.at("ability"));
    cfg.gamma = jsondetail::get_or(j, "gamma", cfg.gamma);
    cfg.alpha_base = jsondetail::get_or(j, "alpha_base", cfg.alpha_base);
    cfg.theta1_min = jsondetail::get_or(j, "theta1_min", cfg.theta1_min);
    cfg.theta1_max = jsondetail::get_or(j, "theta1_max", cfg.theta1_max);
    cfg.alpha_gap_min = jsondetail::get_or(j, "alpha_gap_min", cfg.alpha_gap_min);
    cfg.alpha_gap_max = jsondetail::get_or(j, "alpha_gap_max", cfg.alpha_gap_max);
    cfg.min_extensive_households = jsondetail::get_or(j, "min_extensive_households", cfg.min_extensive_households);
    cfg.validate();
    return cfg;
}

inline PolicySpec policy_from_json(const json& j) {
    jsondetail::require_keys(j,
                             {"firstborn_cost_cut_ext", "firstborn_cost_cut_int", "daughter_cost_cut_ext",
                              "daughter_cost_cut_int", "extensive_fix", "calibrated"},
                             "policy");
    PolicySpec p;
    p.firstborn_cost_cut_ext = jsondetail::get_or(j, "firstborn_cost_cut_ext", 0.0);
    p.firstborn_cost_cut_int = jsondetail::get_or(j, "firstborn_cost_cut_int", 0.0);
    p.daughter_cost_cut_ext = jsondetail::get_or(j, "daughter_cost_cut_ext", p.daughter_cost_cut_ext);
    p.daughter_cost_cut_int = jsondetail::get_or(j, "daughter_cost_cut_int", p.daughter_cost_cut_int);
    p.extensive_fix = jsondetail::get_or(j, "extensive_fix", false);
    p.calibrated = jsondetail::get_or(j, "calibrated", false);
    p.validate();
    return p;
}

inline json moment_vector_to_json(const MomentVector& mv) {
    return json{{"stratum", mv.stratum.label()}, {"m1", mv.m1},        {"m2", mv.m2},
                {"m3", mv.m3},                   {"m4", mv.m4},        {"m_birth_d", mv.m_birth_d},
                {"m_birth_s", mv.m_birth_s}};
}

inline json inequality_to_json(const InequalityStats& st) {
    return json{{"total_var", st.total_var},
                {"between_var", st.between_var},
                {"within_var_mean", st.within_var_mean},
                {"within_share", st.within_share},
                {"avg_range", st.avg_range},
                {"avg_sd", st.avg_sd},
                {"avg_qbar", st.avg_qbar},
                {"avg_qT", st.avg_qT},
                {"n_households", st.n_households},
                {"n_children", st.n_children}};
}

inline json regression_to_json(const RegressionResult& r) {
    json coefs;
    for (std::size_t i = 0; i < r.names.size(); ++i)
        coefs[r.names[i]] = json{{"estimate", r.coefficients[i]}, {"std_error", r.std_errors[i]}};
    return json{{"coefficients", coefs},
                {"r_squared", r.r_squared},
                {"n_obs", r.n_obs},
                {"n_groups", r.n_groups}};
}

inline json shares_to_json(const DecompositionShares& d) {
    return json{{"margin", to_string(d.margin)},
                {"gender_share_pct", d.gender_share},
                {"birth_order_share_pct", d.birth_order_share},
                {"ability_share_pct", d.ability_share},
                {"avg_inequality", d.avg_inequality},
                {"clamped", d.clamped},
                {"regression", regression_to_json(d.regression)}};
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json estimation_result_to_json(const EstimationResult& r) {
    json se;
    for (std::size_t i = 0; i < r.param_names.size(); ++i) se[r.param_names[i]] = r.std_errors[i];
    json moments = json::array();
    const auto names = MomentVector::component_names(r.data_moments.stratum.n_c);
    const auto d = r.data_moments.flatten();
    const auto m = r.model_moments.flatten();
    for (std::size_t i = 0; i < names.size(); ++i)
        moments.push_back(json{{"moment", names[i]},
                               {"data", d[i]},
                               {"model", m[i]},
                               {"difference", d[i] - m[i]}});
    return json{{"theta_hat", theta_to_json(r.theta_hat)},
                {"objective_at_min", r.objective_at_min},
                {"std_errors", se},
                {"p_high_aversion_se", r.p_high_aversion_se},
                {"moments", moments},
                {"V", matrix_to_json(r.V)},
                {"jacobian", matrix_to_json(r.jacobian)},
                {"omega", matrix_to_json(r.omega)},
                {"converged", r.converged},
                {"stage1_skipped", r.stage1_skipped},
                {"v_pseudo_inverted", r.v_pseudo_inverted},
                {"n_evaluations", r.n_evaluations},
                {"notes", r.notes}};
}

// FNV-1a digest of a file, for the reproducibility stamp in outputs.
inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "missing";
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto h = fnv1a64(ss.str());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + buf;
}

inline json run_metadata(std::uint64_t seed, const std::vector<std::string>& input_paths,
                         const json& resolved_config) {
    json digests;
    for (const auto& p : input_paths) digests[p] = file_digest(p);
    return json{{"tool", "edualloc"},
                {"version", kVersion},
                {"seed", seed},
                {"inputs", digests},
                {"config", resolved_config}};
}

} // namespace edualloc
