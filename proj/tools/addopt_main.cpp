#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "addopt/errors.hpp"
#include "addopt/io.hpp"
#include "addopt/pipeline.hpp"
#include "addopt/rng.hpp"

namespace {

using namespace addopt;

DistanceMetric parse_metric(const std::string& s) {
    if (s == "haversine") return DistanceMetric::Haversine;
    if (s == "euclidean_degrees") return DistanceMetric::EuclideanDegrees;
    throw Error("unknown metric '" + s + "'");
}

Family parse_family(const std::string& s) {
    if (s == "ols") return Family::Ols;
    if (s == "svr-linear" || s == "svr_linear") return Family::SvrLinear;
    if (s == "svr-radial" || s == "svr_radial") return Family::SvrRadial;
    throw Error("unknown family '" + s + "' (ols | svr-linear | svr-radial)");
}

std::vector<int> member_indices(const Network& net, const std::string& csv_ids) {
    if (csv_ids.empty()) return net.active_indices();
    std::vector<int> out;
    std::stringstream ss(csv_ids);
    std::string id;
    while (std::getline(ss, id, ',')) {
        const int idx = net.index_of(id);
        if (idx < 0) throw Error("unknown site id '" + id + "'");
        out.push_back(idx);
    }
    return out;
}

void write_or_print(const std::string& out_path, const std::string& content) {
    if (out_path.empty())
        std::cout << content;
    else
        write_file(out_path, content);
}

struct CommonOpts {
    std::string sites;
    std::string metric = "haversine";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--sites", o.sites, "site CSV file")->required();
    cmd->add_option("--metric", o.metric, "haversine | euclidean_degrees");
}

int cmd_moran(const CommonOpts& common, int permutations, std::uint64_t seed,
              const std::string& format, const std::string& out) {
    const Network net = load_sites(common.sites, parse_metric(common.metric));
    const MoranTable t = moran_table(net, permutations, seed);
    write_or_print(out, format == "text" ? moran_table_text(t) : moran_table_csv(t));
    return 0;
}

struct FitOpts {
    CommonOpts common;
    std::string family = "ols";
    int features = 3;
    double c = 1.0, epsilon = 0.1, gamma = 1e-3, tol = 1e-3;
    long max_iter = 1'000'000;
    std::string out;
};

int cmd_fit(const FitOpts& o) {
    const Network net = load_sites(o.common.sites, parse_metric(o.common.metric));
    FeatureSpec spec{o.features == 4};
    const FeatureBlock block = build_features(net, net.active_indices(), spec);
    auto [X, y] = supervised_rows(block);
    ModelConfig cfg;
    cfg.family = parse_family(o.family);
    cfg.c = o.c;
    cfg.epsilon = o.epsilon;
    cfg.gamma = o.gamma;
    cfg.tol = o.tol;
    cfg.max_iter = o.max_iter;
    const DemandModel model = fit_family(X, y, cfg, spec);
    if (!model.is_ols() && !model.svr().converged)
        std::cerr << "warning: SVR did not converge within " << o.max_iter
                  << " iterations; best iterate saved\n";
    save_model(model, o.out);
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& model_path,
                const std::string& members_csv, const std::string& out) {
    const Network net = load_sites(common.sites, parse_metric(common.metric));
    const DemandModel model = load_model(model_path);
    const std::vector<int> members = member_indices(net, members_csv);
    const FeatureBlock block = build_features(net, members, model.spec);

    std::string csv = "id,predicted,predicted_raw\n";
    double total = 0.0, total_clipped = 0.0;
    for (Eigen::Index r = 0; r < block.X.rows(); ++r) {
        const double raw = predict_site(model, block.X.row(r).transpose());
        const double clipped = std::max(0.0, raw);
        total += raw;
        total_clipped += clipped;
        csv += net.site(block.members[static_cast<std::size_t>(r)]).id + ',' +
               format_double(clipped) + ',' + format_double(raw) + '\n';
    }
    csv += "TOTAL," + format_double(total_clipped) + ',' + format_double(total) + '\n';
    write_or_print(out, csv);
    return 0;
}

struct CvOpts {
    CommonOpts common;
    std::string config;
    int repeats = -1, folds = -1;
    std::uint64_t seed = 0;
    std::string out;
};

// Tables 4-5 layout: rows are stat x feature-variant, columns model families.
int cmd_cv(const CvOpts& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.repeats > 0) cfg.cv_plan.repeats = o.repeats;
    if (o.folds > 0) cfg.cv_plan.folds = o.folds;

    const Network net = load_sites(o.common.sites, parse_metric(o.common.metric));
    const auto& active = net.active_indices();
    CvPlan plan{cfg.cv_plan.repeats, cfg.cv_plan.folds, Rng::derive(o.seed, "cv")};

    const std::vector<Family> fams = {Family::SvrLinear, Family::SvrRadial, Family::Ols};
    std::string csv = "stat";
    for (Family f : fams) csv += ',' + family_name(f);
    csv += '\n';

    for (int feats : {4, 3}) {
        FeatureSpec spec{feats == 4};
        const SplitBuilder build = network_split_builder(net, active, spec);
        std::vector<CvStats> stats;
        for (Family f : fams) {
            const Grid grid = f == Family::SvrRadial ? cfg.grid_radial : cfg.grid_linear;
            stats.push_back(
                grid_search(static_cast<int>(active.size()), build, f, grid, plan).best_stats);
        }
        const auto row = [&](const std::string& name, auto pick) {
            csv += name;
            for (const CvStats& s : stats) csv += ',' + format_double(pick(s));
            csv += '\n';
        };
        const std::string suffix = "_" + std::to_string(feats) + "f";
        row("mean_rmse" + suffix, [](const CvStats& s) { return s.mean_rmse; });
        row("sd_rmse" + suffix, [](const CvStats& s) { return s.sd_rmse; });
        row("mean_mape" + suffix, [](const CvStats& s) { return s.mean_mape; });
        row("sd_mape" + suffix, [](const CvStats& s) { return s.sd_mape; });
    }
    write_or_print(o.out, csv);
    return 0;
}

struct OptimizeOpts {
    std::string model;
    CommonOpts common;
    int k = 1;
    std::string solver = "auto";
    std::string out_dir;
    double time_limit = 60.0;
};

int cmd_optimize(const OptimizeOpts& o) {
    const Network net = load_sites(o.common.sites, parse_metric(o.common.metric));
    const DemandModel model = load_model(o.model);
    ExpansionProblem problem = make_problem(net, model, o.k);
    ExactOptions opts;
    opts.time_limit_seconds = o.time_limit;

    ExpansionSolution sol;
    if (o.solver == "auto") {
        sol = solve_auto(problem, opts);
    } else if (o.solver == "baseline") {
        sol = solve_baseline(problem);
    } else if (o.solver == "sort") {
        sol = solve_sort_topk(problem);
    } else if (o.solver == "exact") {
        sol = solve_exact_quadratic(problem, opts);
    } else if (o.solver == "greedy") {
        sol = solve_greedy(problem);
    } else {
        throw Error("unknown solver '" + o.solver + "'");
    }

    std::cout << "solver: " << solver_name(sol.solver)
              << (sol.optimal ? " (optimal)" : " (not certified optimal)") << "\n";
    std::cout << "objective: " << format_double(sol.objective_value) << "\n";
    std::cout << "chosen:";
    for (int i : sol.chosen) std::cout << ' ' << net.site(i).id;
    std::cout << "\n";

    if (!o.out_dir.empty()) {
        std::filesystem::create_directories(o.out_dir);
        const auto p = [&](const char* n) {
            return (std::filesystem::path(o.out_dir) / n).string();
        };
        const double z0 = evaluate_selection(problem, {});
        std::string csv = "id,base_sales,single_site_marginal,chosen\n";
        std::vector<bool> chosen(static_cast<std::size_t>(net.size()), false);
        for (int i : sol.chosen) chosen[static_cast<std::size_t>(i)] = true;
        std::vector<int> cands = problem.candidates;
        std::sort(cands.begin(), cands.end(),
                  [&](int a, int b) { return net.site(a).id < net.site(b).id; });
        for (int c : cands) {
            const Site& s = net.site(c);
            csv += s.id + ',' + (s.base_sales ? format_double(*s.base_sales) : "") + ',' +
                   format_double(evaluate_selection(problem, {c}) - z0) + ',' +
                   (chosen[static_cast<std::size_t>(c)] ? "1" : "0") + '\n';
        }
        write_file(p("expansion.csv"), csv);
        emit_map_svg(net, sol, p("map.svg"));
        std::cout << "wrote " << p("expansion.csv") << " and " << p("map.svg") << "\n";
    }
    return 0;
}

struct ExperimentOpts {
    CommonOpts common;
    std::string config;
    std::string model;
    std::vector<std::string> alt_models;
    std::string out_dir;
    std::string region = "region";
    std::vector<int> s_values;
    int draws = -1, k_max = -1;
    std::uint64_t seed = 0;
};

int cmd_experiment(const ExperimentOpts& o) {
    const Network net = load_sites(o.common.sites, parse_metric(o.common.metric));
    const DemandModel model = load_model(o.model);
    SimConfig sim = o.config.empty() ? SimConfig{} : load_config(o.config).sim;
    if (!o.s_values.empty()) sim.s_values = o.s_values;
    if (o.draws > 0) sim.draws_per_sigma = o.draws;
    if (o.k_max > 0) sim.k_max = o.k_max;
    sim.seed = o.seed;
    if (sim.k_max > static_cast<int>(net.candidate_indices().size()))
        std::cerr << "warning: k_max " << sim.k_max << " capped to the candidate count "
                  << net.candidate_indices().size() << "\n";

    std::filesystem::create_directories(o.out_dir);
    const auto p = [&](const std::string& n) {
        return (std::filesystem::path(o.out_dir) / n).string();
    };

    const SweepResult sweep = run_gain_sweep(net, model, sim, o.region);
    write_file(p("gains.csv"), gains_csv(sweep, sim));
    write_file(p("records.csv"), records_csv(net, sweep));
    for (const std::string& alt_path : o.alt_models) {
        const DemandModel alt = load_model(alt_path);
        const SweepResult rob = robustness_check(net, sweep, alt, sim);
        const std::string stem = std::filesystem::path(alt_path).stem().string();
        write_file(p("robustness_" + stem + ".csv"), gains_csv(rob, sim));
    }
    std::cout << "wrote experiment outputs under " << o.out_dir << "\n";
    return 0;
}

int cmd_map(const CommonOpts& common, const std::string& chosen_csv, const std::string& out) {
    const Network net = load_sites(common.sites, parse_metric(common.metric));
    ExpansionSolution sol;
    if (!chosen_csv.empty()) {
        std::stringstream ss(chosen_csv);
        std::string id;
        while (std::getline(ss, id, ',')) {
            const int idx = net.index_of(id);
            if (idx < 0) throw Error("unknown site id '" + id + "'");
            sol.chosen.push_back(idx);
        }
    }
    emit_map_svg(net, sol, out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Derived-demand site expansion: predict add-on sales, then optimize"};
    app.require_subcommand(1);

    // moran
    CommonOpts moran_common;
    int moran_perms = 999;
    std::uint64_t moran_seed = 0;
    std::string moran_format = "csv", moran_out;
    auto* moran_cmd = app.add_subcommand("moran", "Moran's I report for a site file");
    add_common(moran_cmd, moran_common);
    moran_cmd->add_option("--permutations", moran_perms, "residual-test permutations");
    moran_cmd->add_option("--seed", moran_seed, "permutation seed");
    moran_cmd->add_option("--format", moran_format, "csv | text");
    moran_cmd->add_option("--out", moran_out, "output file (stdout if omitted)");

    // fit
    FitOpts fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit one demand model");
    add_common(fit_cmd, fit.common);
    fit_cmd->add_option("--family", fit.family, "ols | svr-linear | svr-radial");
    fit_cmd->add_option("--features", fit.features, "3 or 4 (with spatial lag)")
        ->check(CLI::IsMember({3, 4}));
    fit_cmd->add_option("--c", fit.c, "SVR box constraint");
    fit_cmd->add_option("--epsilon", fit.epsilon, "SVR tube");
    fit_cmd->add_option("--gamma", fit.gamma, "radial kernel width");
    fit_cmd->add_option("--tol", fit.tol, "SVR KKT tolerance");
    fit_cmd->add_option("--max-iter", fit.max_iter, "SVR iteration cap");
    fit_cmd->add_option("--out", fit.out, "model file to write")->required();

    // predict
    CommonOpts predict_common;
    std::string predict_model, predict_members, predict_out;
    auto* predict_cmd = app.add_subcommand("predict", "evaluate a model on a member set");
    add_common(predict_cmd, predict_common);
    predict_cmd->add_option("--model", predict_model, "model file")->required();
    predict_cmd->add_option("--members", predict_members,
                            "comma-separated site ids (default: active sites)");
    predict_cmd->add_option("--out", predict_out, "output file (stdout if omitted)");

    // cv
    CvOpts cv;
    auto* cv_cmd = app.add_subcommand("cv", "cross-validation table for all model families");
    add_common(cv_cmd, cv.common);
    cv_cmd->add_option("--config", cv.config, "JSON config supplying the plan and grids");
    cv_cmd->add_option("--repeats", cv.repeats, "CV repeats");
    cv_cmd->add_option("--folds", cv.folds, "CV folds");
    cv_cmd->add_option("--seed", cv.seed, "fold shuffle seed");
    cv_cmd->add_option("--out", cv.out, "output file (stdout if omitted)");

    // select
    CommonOpts select_common;
    std::string select_policy = "auto", select_out_dir;
    double select_alpha = 0.05;
    int select_repeats = 50, select_folds = 10, select_perms = 999;
    std::uint64_t select_seed = 0;
    auto* select_cmd = app.add_subcommand("select", "choose and fit the best model (P*)");
    add_common(select_cmd, select_common);
    select_cmd->add_option("--feature-policy", select_policy, "auto | force3 | force4");
    select_cmd->add_option("--alpha", select_alpha, "Moran significance threshold");
    select_cmd->add_option("--repeats", select_repeats, "CV repeats");
    select_cmd->add_option("--folds", select_folds, "CV folds");
    select_cmd->add_option("--permutations", select_perms, "residual-test permutations");
    select_cmd->add_option("--seed", select_seed, "seed");
    select_cmd->add_option("--out-dir", select_out_dir, "directory for model + report")
        ->required();

    // optimize
    OptimizeOpts opt;
    auto* opt_cmd = app.add_subcommand("optimize", "pick expansion sites under a fitted model");
    add_common(opt_cmd, opt.common);
    opt_cmd->add_option("--model", opt.model, "model file")->required();
    opt_cmd->add_option("--k", opt.k, "number of expansion sites")->required();
    opt_cmd->add_option("--solver", opt.solver, "baseline | sort | exact | greedy | auto");
    opt_cmd->add_option("--time-limit", opt.time_limit, "exact solver time limit (s)");
    opt_cmd->add_option("--out-dir", opt.out_dir, "write expansion.csv and map.svg here");

    // experiment
    ExperimentOpts exp;
    auto* exp_cmd = app.add_subcommand("experiment", "simulated gain sweep and robustness check");
    add_common(exp_cmd, exp.common);
    exp_cmd->add_option("--config", exp.config, "JSON config supplying the sim settings");
    exp_cmd->add_option("--model", exp.model, "P* model file")->required();
    exp_cmd->add_option("--alt-models", exp.alt_models, "other model files for robustness");
    exp_cmd->add_option("--region", exp.region, "region label in records");
    exp_cmd->add_option("--s-values", exp.s_values, "sigma exponents (sigma = 4^s)");
    exp_cmd->add_option("--draws", exp.draws, "draws per sigma");
    exp_cmd->add_option("--kmax", exp.k_max, "largest K");
    exp_cmd->add_option("--seed", exp.seed, "simulation seed")->required();
    exp_cmd->add_option("--out", exp.out_dir, "output directory")->required();

    // run
    std::string run_config, run_sites, run_out, run_metric, run_policy, run_region;
    double run_alpha = -1.0, run_svr_tol = -1.0, run_time_limit = -1.0, run_threshold = -1.0;
    int run_repeats = -1, run_folds = -1, run_draws = -1, run_kmax = -1, run_perms = -1;
    int run_map_s = -1, run_map_draw = -1, run_map_k = -1;
    long run_svr_max_iter = -1;
    std::vector<int> run_s_values;
    std::vector<double> run_grid_c, run_grid_eps, run_grid_gamma;
    std::uint64_t run_seed = 0;
    auto* run_cmd = app.add_subcommand("run", "full pipeline from a config file");
    run_cmd->add_option("--config", run_config, "JSON config file");
    run_cmd->add_option("--sites", run_sites, "override: site CSV");
    run_cmd->add_option("--out", run_out, "override: output directory");
    run_cmd->add_option("--region", run_region, "override: region label");
    run_cmd->add_option("--metric", run_metric, "override: distance metric");
    run_cmd->add_option("--feature-policy", run_policy, "override: auto | force3 | force4");
    run_cmd->add_option("--alpha", run_alpha, "override: Moran threshold");
    run_cmd->add_option("--repeats", run_repeats, "override: CV repeats");
    run_cmd->add_option("--folds", run_folds, "override: CV folds");
    run_cmd->add_option("--s-values", run_s_values, "override: sigma exponents");
    run_cmd->add_option("--draws", run_draws, "override: draws per sigma");
    run_cmd->add_option("--kmax", run_kmax, "override: largest K");
    run_cmd->add_option("--permutations", run_perms, "override: permutations");
    run_cmd->add_option("--grid-c", run_grid_c, "override: C grid values");
    run_cmd->add_option("--grid-epsilon", run_grid_eps, "override: epsilon grid values");
    run_cmd->add_option("--grid-gamma", run_grid_gamma, "override: gamma grid values");
    run_cmd->add_option("--map-s", run_map_s, "override: mapped instance sigma exponent");
    run_cmd->add_option("--map-draw", run_map_draw, "override: mapped instance draw");
    run_cmd->add_option("--map-k", run_map_k, "override: mapped instance K");
    run_cmd->add_option("--svr-tol", run_svr_tol, "override: SVR KKT tolerance");
    run_cmd->add_option("--svr-max-iter", run_svr_max_iter, "override: SVR iteration cap");
    run_cmd->add_option("--time-limit", run_time_limit, "override: exact solver limit (s)");
    run_cmd->add_option("--exhaustive-threshold", run_threshold,
                        "override: enumerate below this subset count");
    run_cmd->add_option("--seed", run_seed, "master seed")->required();

    // map
    CommonOpts map_common;
    std::string map_chosen, map_out;
    auto* map_cmd = app.add_subcommand("map", "SVG map of a site file");
    add_common(map_cmd, map_common);
    map_cmd->add_option("--chosen", map_chosen, "comma-separated chosen candidate ids");
    map_cmd->add_option("--out", map_out, "SVG file to write")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (moran_cmd->parsed())
            return cmd_moran(moran_common, moran_perms, moran_seed, moran_format, moran_out);
        if (fit_cmd->parsed()) return cmd_fit(fit);
        if (predict_cmd->parsed())
            return cmd_predict(predict_common, predict_model, predict_members, predict_out);
        if (cv_cmd->parsed()) return cmd_cv(cv);
        if (select_cmd->parsed()) {
            addopt::RunConfig cfg;
            cfg.sites_path = select_common.sites;
            cfg.metric = parse_metric(select_common.metric);
            cfg.out_dir = select_out_dir;
            cfg.alpha = select_alpha;
            cfg.cv_plan.repeats = select_repeats;
            cfg.cv_plan.folds = select_folds;
            cfg.permutations = select_perms;
            cfg.seed = select_seed;

            const Network net = load_sites(cfg.sites_path, cfg.metric);
            const MoranTable t = moran_table(net, cfg.permutations, cfg.seed);
            FeatureSpec spec;
            if (select_policy == "force3") spec.use_spatial_lag = false;
            else if (select_policy == "force4") spec.use_spatial_lag = true;
            else spec.use_spatial_lag = resolve_spatial_lag(FeaturePolicy::Auto, t, cfg.alpha);

            const SelectionResult sel = select_model(net, spec, cfg);
            std::filesystem::create_directories(select_out_dir);
            const auto p = [&](const char* n) {
                return (std::filesystem::path(select_out_dir) / n).string();
            };
            save_model(sel.model, p("model.json"));
            write_file(p("selection.json"), selection_report_json(sel));
            std::cout << "chose " << family_name(sel.chosen) << " with " << spec.count()
                      << " features; wrote " << p("model.json") << " and " << p("selection.json")
                      << "\n";
            return 0;
        }
        if (opt_cmd->parsed()) return cmd_optimize(opt);
        if (exp_cmd->parsed()) return cmd_experiment(exp);
        if (run_cmd->parsed()) {
            RunConfig cfg = run_config.empty() ? RunConfig{} : load_config(run_config);
            if (!run_sites.empty()) cfg.sites_path = run_sites;
            if (!run_out.empty()) cfg.out_dir = run_out;
            if (!run_region.empty()) cfg.region = run_region;
            if (!run_metric.empty()) cfg.metric = parse_metric(run_metric);
            if (!run_policy.empty()) {
                if (run_policy == "auto") cfg.feature_policy = FeaturePolicy::Auto;
                else if (run_policy == "force3") cfg.feature_policy = FeaturePolicy::Force3;
                else if (run_policy == "force4") cfg.feature_policy = FeaturePolicy::Force4;
                else throw Error("unknown feature policy '" + run_policy + "'");
            }
            if (run_alpha > 0.0) cfg.alpha = run_alpha;
            if (run_repeats > 0) cfg.cv_plan.repeats = run_repeats;
            if (run_folds > 0) cfg.cv_plan.folds = run_folds;
            if (!run_s_values.empty()) cfg.sim.s_values = run_s_values;
            if (run_draws > 0) cfg.sim.draws_per_sigma = run_draws;
            if (run_kmax > 0) cfg.sim.k_max = run_kmax;
            if (run_perms > 0) cfg.permutations = run_perms;
            if (!run_grid_c.empty()) {
                cfg.grid_linear.c_values = run_grid_c;
                cfg.grid_radial.c_values = run_grid_c;
            }
            if (!run_grid_eps.empty()) {
                cfg.grid_linear.epsilon_values = run_grid_eps;
                cfg.grid_radial.epsilon_values = run_grid_eps;
            }
            if (!run_grid_gamma.empty()) cfg.grid_radial.gamma_values = run_grid_gamma;
            if (run_map_s >= 0) cfg.map_s = run_map_s;
            if (run_map_draw >= 0) cfg.map_draw = run_map_draw;
            if (run_map_k > 0) cfg.map_k = run_map_k;
            if (run_svr_tol > 0.0) cfg.svr_tol = run_svr_tol;
            if (run_svr_max_iter > 0) cfg.svr_max_iter = run_svr_max_iter;
            if (run_time_limit > 0.0) cfg.exact.time_limit_seconds = run_time_limit;
            if (run_threshold >= 0.0) cfg.exact.exhaustive_threshold = run_threshold;
            cfg.seed = run_seed;
            pipeline_run(cfg);
            std::cout << "wrote pipeline outputs under " << cfg.out_dir << "\n";
            return 0;
        }
        if (map_cmd->parsed()) return cmd_map(map_common, map_chosen, map_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
