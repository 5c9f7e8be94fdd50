// Command-line front end: reproducible batch runs over the library with
// file-based inputs and outputs. Every JSON output embeds the tool version,
// the resolved seed, and digests of the input files.

#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "edualloc/counterfactual.hpp"
#include "edualloc/ecdf.hpp"
#include "edualloc/estimator.hpp"
#include "edualloc/json_io.hpp"
#include "edualloc/moments.hpp"
#include "edualloc/population.hpp"
#include "edualloc/recovery.hpp"
#include "edualloc/regress.hpp"
#include "edualloc/version.hpp"

namespace {

using edualloc::json;

struct CommonArgs {
    std::string config_path;
    std::string in_path;
    std::string out_path;
    std::string stratum;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0;

    int resolved_threads() const { return threads > 0 ? threads : edualloc::default_threads(); }
};

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    json j;
    in >> j;
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

std::string summary_path_for(const std::string& out_path) {
    const auto dot = out_path.rfind('.');
    const std::string stem = dot == std::string::npos ? out_path : out_path.substr(0, dot);
    return stem + "_summary.json";
}

std::uint64_t resolve_seed(const CommonArgs& args, const json& config, std::uint64_t fallback) {
    if (args.seed_given) return args.seed;
    if (config.contains("seed")) return config.at("seed").get<std::uint64_t>();
    return fallback;
}

void echo_metadata(const json& meta) { std::cout << meta.dump(2) << "\n"; }

std::vector<edualloc::HouseholdOutcome> load_filtered(const CommonArgs& args) {
    auto pop = edualloc::load_population(args.in_path);
    if (args.stratum.empty()) return pop;
    const auto pe = edualloc::parent_educ_from_string(args.stratum);
    std::vector<edualloc::HouseholdOutcome> out;
    for (auto& hh : pop)
        if (hh.parent_educ == pe) out.push_back(std::move(hh));
    if (out.empty()) throw std::invalid_argument("no households in stratum '" + args.stratum + "'");
    return out;
}

// households for a counterfactual template: a population block, or a CSV of
// observed households whose budgets become the template budgets
std::vector<edualloc::HouseholdSpec> template_from_config(const json& cfg, std::uint64_t seed,
                                                          std::vector<std::string>& inputs) {
    if (cfg.contains("template_csv")) {
        const std::string path = cfg.at("template_csv").get<std::string>();
        inputs.push_back(path);
        const auto pop = edualloc::load_population(path);
        std::vector<edualloc::HouseholdSpec> specs;
        for (const auto& hh : pop) {
            if (hh.q_T() <= 0.0) continue;
            edualloc::HouseholdSpec spec;
            spec.parent_educ = hh.parent_educ;
            spec.q_T = hh.q_T();
            for (const auto& c : hh.children)
                spec.children.push_back(edualloc::ChildSpec{c.female, c.birth_order, 0.5});
            specs.push_back(std::move(spec));
        }
        if (specs.empty()) throw std::invalid_argument("template_csv has no households with positive budgets");
        return specs;
    }
    if (!cfg.contains("population"))
        throw std::invalid_argument("config needs either 'population' or 'template_csv'");
    auto pop_cfg = edualloc::population_config_from_json(cfg.at("population"));
    pop_cfg.seed = edualloc::derive_seed(seed, "template");
    return edualloc::generate_population(pop_cfg);
}

edualloc::AbilitySource ability_source_from_config(const json& cfg, std::vector<std::string>& inputs) {
    edualloc::AbilitySource src;
    if (cfg.contains("ability")) src.dist = edualloc::ability_from_json(cfg.at("ability"));
    if (cfg.contains("ability_pool_csv")) {
        const std::string path = cfg.at("ability_pool_csv").get<std::string>();
        inputs.push_back(path);
        edualloc::csv::Reader reader(path);
        std::vector<std::string> fields;
        if (!reader.next(fields)) reader.fail("empty ability pool");
        if (fields.empty() || fields[0] != "household_id")
            reader.fail("expected a recovery export (header starting with household_id)");
        while (reader.next(fields)) {
            if (fields.size() < 5) reader.fail("expected 5 fields");
            if (fields[4] != "0") continue;  // corner rows carry bounds, not draws
            src.pool.push_back(edualloc::csv::parse_double(reader, fields[1], "a1_hat"));
        }
        if (src.pool.empty()) reader.fail("no interior recoveries in the ability pool");
    }
    return src;
}

json gap_summary(const edualloc::GapDistribution& d, const edualloc::GapDistribution& no_dis) {
    return json{{"scenario", d.scenario},
                {"n", d.samples.size()},
                {"mean", d.mean()},
                {"ks_to_no_disadvantage", edualloc::ks_distance(d, no_dis)},
                {"fosd_gap_vs_no_disadvantage", edualloc::fosd_gap(no_dis, d)}};
}

void write_gap_csv(const std::string& path, const std::vector<const edualloc::GapDistribution*>& dists) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write '" + path + "'");
    out << "scenario,gap_years\n";
    out.precision(12);
    for (const auto* d : dists)
        for (double g : d->samples) out << d->scenario << ',' << g << "\n";
}

int run_simulate(const CommonArgs& args, bool no_round) {
    const json cfg = load_json_file(args.config_path);
    edualloc::jsondetail::require_keys(cfg, {"population", "theta", "seed"}, "simulate");
    auto pop_cfg = edualloc::population_config_from_json(cfg.at("population"));
    const auto theta = edualloc::theta_from_json(cfg.at("theta"));
    const std::uint64_t seed = resolve_seed(args, cfg, pop_cfg.seed);
    pop_cfg.seed = seed;

    const auto specs = edualloc::generate_population(pop_cfg);
    const auto outcomes = edualloc::simulate_population(specs, theta, edualloc::derive_seed(seed, "outcomes"),
                                                        !no_round, args.resolved_threads());
    std::ofstream out(args.out_path);
    if (!out) throw std::invalid_argument("cannot write '" + args.out_path + "'");
    edualloc::save_population(outcomes, out);

    json resolved{{"population", edualloc::population_config_to_json(pop_cfg)},
                  {"theta", edualloc::theta_to_json(theta)},
                  {"round_years", !no_round}};
    echo_metadata(edualloc::run_metadata(seed, {args.config_path}, resolved));
    return 0;
}

int run_moments(const CommonArgs& args) {
    const auto pop = load_filtered(args);
    json per_stratum;
    for (const auto& stratum : edualloc::list_strata(pop)) {
        std::vector<edualloc::HouseholdOutcome> sub;
        for (const auto& hh : pop)
            if (hh.stratum() == stratum) sub.push_back(hh);
        json entry;
        entry["inequality"] = edualloc::inequality_to_json(edualloc::variance_decomposition(sub));
        try {
            entry["moments"] = edualloc::moment_vector_to_json(edualloc::compute_moment_vector(sub, stratum));
            entry["share_all_educated"] = edualloc::share_all_educated(sub, stratum);
        } catch (const std::invalid_argument& e) {
            entry["moments"] = nullptr;
            entry["moments_error"] = e.what();
        }
        per_stratum[stratum.label()] = entry;
    }
    json out{{"meta", edualloc::run_metadata(0, {args.in_path}, json{{"stratum", args.stratum}})},
             {"strata", per_stratum}};
    write_json_file(args.out_path, out);
    return 0;
}

int run_estimate(const CommonArgs& args) {
    const json cfg_json = args.config_path.empty() ? json::object() : load_json_file(args.config_path);
    auto cfg = edualloc::estimation_config_from_json(cfg_json);
    cfg.seed = resolve_seed(args, cfg_json, cfg.seed);
    const auto pop = edualloc::load_population(args.in_path);
    const edualloc::Stratum stratum{
        args.stratum.empty() ? edualloc::ParentEduc::None : edualloc::parent_educ_from_string(args.stratum), 2};

    const auto result = edualloc::estimate_theta(pop, stratum, cfg);
    json out = edualloc::estimation_result_to_json(result);
    out["meta"] = edualloc::run_metadata(cfg.seed, {args.in_path, args.config_path},
                                         json{{"stratum", stratum.label()}, {"config", cfg_json}});
    write_json_file(args.out_path, out);
    std::cout << "theta_hat written to " << args.out_path << "\n";
    return 0;
}

int run_decompose(const CommonArgs& args) {
    const auto pop = load_filtered(args);
    json margins;
    for (const auto margin : {edualloc::Margin::All, edualloc::Margin::Intensive, edualloc::Margin::Extensive}) {
        try {
            margins[edualloc::to_string(margin)] =
                edualloc::shares_to_json(edualloc::decomposition_shares(pop, margin));
        } catch (const std::invalid_argument& e) {
            margins[edualloc::to_string(margin)] = json{{"error", e.what()}};
        }
    }
    json diff;
    try {
        const auto d = edualloc::diff_regression(pop);
        diff = json{{"gender_effect", d.gender_effect},
                    {"birth_effect", d.birth_effect},
                    {"mean_gap_fb_daughter", d.mean_gap_fb_daughter},
                    {"mean_gap_fb_son", d.mean_gap_fb_son},
                    {"n_fb_daughter", d.n_fb_daughter},
                    {"n_fb_son", d.n_fb_son}};
    } catch (const std::invalid_argument& e) {
        diff = json{{"error", e.what()}};
    }
    json out{{"meta", edualloc::run_metadata(0, {args.in_path}, json{{"stratum", args.stratum}})},
             {"decomposition", margins},
             {"diff_regression", diff}};
    write_json_file(args.out_path, out);
    return 0;
}

int run_recover(const CommonArgs& args, const std::string& theta_path, const std::string& diagnostics_out) {
    const auto theta = edualloc::theta_from_json(load_json_file(theta_path));
    const auto pop = load_filtered(args);
    const auto recs = edualloc::recover_population(pop, theta);

    std::ofstream out(args.out_path);
    if (!out) throw std::invalid_argument("cannot write '" + args.out_path + "'");
    out << "household_id,a1_hat,a2_hat,residual,corner_flag\n";
    out.precision(12);
    for (const auto& r : recs)
        out << r.household_id << ',' << r.a1 << ',' << r.a2 << ',' << r.residual << ',' << (r.corner ? 1 : 0)
            << "\n";

    if (!diagnostics_out.empty()) {
        const auto diag = edualloc::ability_diagnostics(pop, theta);
        json j{{"meta", edualloc::run_metadata(0, {args.in_path, theta_path}, json{})},
               {"n_recovered", diag.n_recovered},
               {"n_corner", diag.n_corner},
               {"ks_gender", diag.gender.statistic},
               {"ks_birth_order", diag.birth_order.statistic}};
        write_json_file(diagnostics_out, j);
    }
    echo_metadata(edualloc::run_metadata(0, {args.in_path, theta_path}, json{{"stratum", args.stratum}}));
    return 0;
}

int run_cf1(const CommonArgs& args) {
    const json cfg = load_json_file(args.config_path);
    edualloc::jsondetail::require_keys(cfg, {"theta", "ability", "q_T", "grid_min", "grid_max", "grid_step", "seed"},
                                       "cf1");
    const auto theta = edualloc::theta_from_json(cfg.at("theta"));
    const auto dist = cfg.contains("ability") ? edualloc::ability_from_json(cfg.at("ability"))
                                              : edualloc::AbilityDist{};
    const double q_T = cfg.at("q_T").get<double>();
    const double lo = edualloc::jsondetail::get_or(cfg, "grid_min", 0.3);
    const double hi = edualloc::jsondetail::get_or(cfg, "grid_max", 0.7);
    const double step = edualloc::jsondetail::get_or(cfg, "grid_step", 0.005);
    std::vector<double> grid;
    for (double a = lo; a <= hi + 1e-12; a += step) grid.push_back(a);

    const auto r = edualloc::cf1_gap_curve(theta, dist, q_T, grid);
    std::ofstream out(args.out_path);
    if (!out) throw std::invalid_argument("cannot write '" + args.out_path + "'");
    out << "a1,gap_with_disadvantages,gap_without_disadvantages\n";
    out.precision(12);
    for (std::size_t i = 0; i < r.ability_grid.size(); ++i)
        out << r.ability_grid[i] << ',' << r.gap_with[i] << ',' << r.gap_without[i] << "\n";

    json summary{{"meta", edualloc::run_metadata(0, {args.config_path}, cfg)},
                 {"q_T", q_T},
                 {"crossing_a1", r.crossing_a1 ? json(*r.crossing_a1) : json(nullptr)},
                 {"crossing_ratio", r.crossing_ratio ? json(*r.crossing_ratio) : json(nullptr)}};
    write_json_file(summary_path_for(args.out_path), summary);
    echo_metadata(summary.at("meta"));
    return 0;
}

int run_cf2(const CommonArgs& args) {
    const json cfg = load_json_file(args.config_path);
    edualloc::jsondetail::require_keys(
        cfg, {"theta", "policy", "ability", "ability_pool_csv", "population", "template_csv", "gap_kind", "seed"},
        "cf2");
    const auto theta = edualloc::theta_from_json(cfg.at("theta"));
    const auto policy = cfg.contains("policy") ? edualloc::policy_from_json(cfg.at("policy"))
                                               : edualloc::PolicySpec{};
    const std::uint64_t seed = resolve_seed(args, cfg, 1);
    std::vector<std::string> inputs{args.config_path};
    const auto households = template_from_config(cfg, seed, inputs);
    const auto abilities = ability_source_from_config(cfg, inputs);
    const std::string kind_s = edualloc::jsondetail::get_or<std::string>(cfg, "gap_kind", "daughter_son");
    const auto kind = kind_s == "firstborn_secondborn" ? edualloc::GapKind::FirstbornSecondborn
                                                       : edualloc::GapKind::DaughterSon;

    const auto r = edualloc::cf2_policy_distributions(theta, policy, abilities, households, seed, kind,
                                                      args.resolved_threads());
    write_gap_csv(args.out_path, {&r.baseline, &r.no_disadvantage, &r.policy, &r.extensive_fix});

    json scenarios = json::array();
    for (const auto* d : {&r.baseline, &r.no_disadvantage, &r.policy, &r.extensive_fix})
        scenarios.push_back(gap_summary(*d, r.no_disadvantage));
    json summary{{"meta", edualloc::run_metadata(seed, inputs, cfg)},
                 {"gap_kind", kind_s},
                 {"scenarios", scenarios},
                 {"fosd_no_disadvantage_over_baseline",
                  edualloc::fosd_gap(r.no_disadvantage, r.baseline) <= 0.01}};
    write_json_file(summary_path_for(args.out_path), summary);
    echo_metadata(summary.at("meta"));
    return 0;
}

int run_cf3(const CommonArgs& args) {
    const json cfg = load_json_file(args.config_path);
    edualloc::jsondetail::require_keys(
        cfg, {"theta", "ability", "ability_pool_csv", "population", "template_csv", "qbar_from", "qbar_to",
              "gap_kind", "seed"},
        "cf3");
    const auto theta = edualloc::theta_from_json(cfg.at("theta"));
    const std::uint64_t seed = resolve_seed(args, cfg, 1);
    std::vector<std::string> inputs{args.config_path};
    const auto households = template_from_config(cfg, seed, inputs);
    const auto abilities = ability_source_from_config(cfg, inputs);
    const double from = cfg.at("qbar_from").get<double>();
    const double to = cfg.at("qbar_to").get<double>();
    const std::string kind_s = edualloc::jsondetail::get_or<std::string>(cfg, "gap_kind", "daughter_son");
    const auto kind = kind_s == "firstborn_secondborn" ? edualloc::GapKind::FirstbornSecondborn
                                                       : edualloc::GapKind::DaughterSon;

    const auto r = edualloc::cf3_resource_increase(theta, abilities, households, from, to, seed, kind,
                                                   args.resolved_threads());
    write_gap_csv(args.out_path, {&r.before, &r.after});
    json summary{{"meta", edualloc::run_metadata(seed, inputs, cfg)},
                 {"qbar_from", from},
                 {"qbar_to", to},
                 {"mean_before", r.mean_before},
                 {"mean_after", r.mean_after},
                 {"capped_share", r.capped_share},
                 {"cap_warning", r.cap_warning}};
    write_json_file(summary_path_for(args.out_path), summary);
    echo_metadata(summary.at("meta"));
    return 0;
}

int run_fit_beta(const CommonArgs& args) {
    const auto scores = edualloc::load_scores(args.in_path);
    const auto fit = edualloc::fit_beta_mle(scores);
    json out{{"meta", edualloc::run_metadata(0, {args.in_path}, json{})},
             {"ability", edualloc::ability_to_json(fit)},
             {"n_samples", scores.size()}};
    write_json_file(args.out_path, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural model of intra-household education allocation", "edualloc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", edualloc::kVersion);

    CommonArgs args;
    bool no_round = false;
    std::string theta_path, diagnostics_out;

    auto add_common = [&](CLI::App* cmd, bool needs_config, bool needs_in) {
        if (needs_config) cmd->add_option("--config", args.config_path, "JSON config")->required();
        if (needs_in) cmd->add_option("--in", args.in_path, "input household CSV")->required();
        cmd->add_option("--out", args.out_path, "output path")->required();
        cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
            args.seed_given = true;
        });
        cmd->add_option("--threads", args.threads, "worker threads (default: cores)");
        cmd->add_option("--stratum", args.stratum, "parent education filter (none|primary|junior|senior|college)");
    };

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic population and simulate outcomes");
    add_common(simulate, true, false);
    simulate->add_flag("--no-round", no_round, "write continuous years instead of integer rounding");

    auto* moments = app.add_subcommand("moments", "moment vector and inequality statistics per stratum");
    add_common(moments, false, true);

    auto* estimate = app.add_subcommand("estimate", "simulated method of moments estimation");
    add_common(estimate, true, true);

    auto* decompose = app.add_subcommand("decompose", "inequality decomposition into gender/birth order/ability");
    add_common(decompose, false, true);

    auto* recover = app.add_subcommand("recover", "invert abilities from observed allocations");
    add_common(recover, false, true);
    recover->add_option("--theta", theta_path, "theta JSON")->required();
    recover->add_option("--diagnostics-out", diagnostics_out, "optional ability-diagnostics JSON");

    auto* cf = app.add_subcommand("counterfactual", "policy experiments");
    cf->require_subcommand(1);
    auto* cf1 = cf->add_subcommand("cf1", "offsetting-ability curve");
    add_common(cf1, true, false);
    auto* cf2 = cf->add_subcommand("cf2", "cost-reduction policy distributions");
    add_common(cf2, true, false);
    auto* cf3 = cf->add_subcommand("cf3", "resource-increase comparison");
    add_common(cf3, true, false);

    auto* fit_beta = app.add_subcommand("fit-beta", "fit the ability Beta law to a score column");
    add_common(fit_beta, false, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message and usage hint
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) return run_simulate(args, no_round);
        if (moments->parsed()) return run_moments(args);
        if (estimate->parsed()) return run_estimate(args);
        if (decompose->parsed()) return run_decompose(args);
        if (recover->parsed()) return run_recover(args, theta_path, diagnostics_out);
        if (cf->parsed()) {
            if (cf1->parsed()) return run_cf1(args);
            if (cf2->parsed()) return run_cf2(args);
            if (cf3->parsed()) return run_cf3(args);
        }
        if (fit_beta->parsed()) return run_fit_beta(args);
    } catch (const edualloc::NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
