#include "addopt/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "addopt/errors.hpp"
#include "addopt/io.hpp"
#include "addopt/rng.hpp"

namespace addopt {

using json = nlohmann::ordered_json;

namespace {

DistanceMetric metric_from_string(const std::string& s) {
    if (s == "haversine") return DistanceMetric::Haversine;
    if (s == "euclidean_degrees") return DistanceMetric::EuclideanDegrees;
    throw Error("unknown metric '" + s + "' (haversine | euclidean_degrees)");
}

FeaturePolicy policy_from_string(const std::string& s) {
    if (s == "auto") return FeaturePolicy::Auto;
    if (s == "force3") return FeaturePolicy::Force3;
    if (s == "force4") return FeaturePolicy::Force4;
    throw Error("unknown feature policy '" + s + "' (auto | force3 | force4)");
}

const char* policy_name(FeaturePolicy p) {
    switch (p) {
        case FeaturePolicy::Auto: return "auto";
        case FeaturePolicy::Force3: return "force3";
        case FeaturePolicy::Force4: return "force4";
    }
    return "?";
}

const char* metric_name(DistanceMetric m) {
    return m == DistanceMetric::Haversine ? "haversine" : "euclidean_degrees";
}

std::vector<double> doubles_from(const json& a) {
    std::vector<double> v;
    for (const auto& x : a) v.push_back(x.get<double>());
    return v;
}

}  // namespace

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    RunConfig cfg;
    cfg.region = j.value("region", cfg.region);
    cfg.sites_path = j.value("sites", cfg.sites_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    if (j.contains("metric")) cfg.metric = metric_from_string(j["metric"].get<std::string>());
    if (j.contains("feature_policy"))
        cfg.feature_policy = policy_from_string(j["feature_policy"].get<std::string>());
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.permutations = j.value("permutations", cfg.permutations);
    if (j.contains("cv")) {
        cfg.cv_plan.repeats = j["cv"].value("repeats", cfg.cv_plan.repeats);
        cfg.cv_plan.folds = j["cv"].value("folds", cfg.cv_plan.folds);
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        if (g.contains("c")) {
            cfg.grid_linear.c_values = doubles_from(g["c"]);
            cfg.grid_radial.c_values = cfg.grid_linear.c_values;
        }
        if (g.contains("epsilon")) {
            cfg.grid_linear.epsilon_values = doubles_from(g["epsilon"]);
            cfg.grid_radial.epsilon_values = cfg.grid_linear.epsilon_values;
        }
        if (g.contains("gamma")) cfg.grid_radial.gamma_values = doubles_from(g["gamma"]);
    }
    if (j.contains("sim")) {
        const json& s = j["sim"];
        if (s.contains("s_values")) {
            cfg.sim.s_values.clear();
            for (const auto& x : s["s_values"]) cfg.sim.s_values.push_back(x.get<int>());
        }
        cfg.sim.draws_per_sigma = s.value("draws", cfg.sim.draws_per_sigma);
        cfg.sim.k_max = s.value("k_max", cfg.sim.k_max);
    }
    if (j.contains("map")) {
        cfg.map_s = j["map"].value("s", cfg.map_s);
        cfg.map_draw = j["map"].value("draw", cfg.map_draw);
        cfg.map_k = j["map"].value("k", cfg.map_k);
    }
    if (j.contains("svr")) {
        cfg.svr_tol = j["svr"].value("tol", cfg.svr_tol);
        cfg.svr_max_iter = j["svr"].value("max_iter", cfg.svr_max_iter);
    }
    if (j.contains("exact")) {
        cfg.exact.time_limit_seconds =
            j["exact"].value("time_limit_seconds", cfg.exact.time_limit_seconds);
        cfg.exact.exhaustive_threshold =
            j["exact"].value("exhaustive_threshold", cfg.exact.exhaustive_threshold);
    }
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0) throw Error("alpha must lie in (0, 1)");
    return cfg;
}

RunConfig load_config(const std::string& path) {
    RunConfig cfg = config_from_json(read_file(path));
    if (!cfg.sites_path.empty() && !std::filesystem::exists(cfg.sites_path))
        throw Error("config 'sites' path does not exist: " + cfg.sites_path);
    return cfg;
}

MoranTable moran_table(const Network& net, int permutations, std::uint64_t seed) {
    const auto& active = net.active_indices();
    if (active.size() < 3) throw Error("Moran table needs at least 3 active sites");
    const Matrix Wa = submatrix(net.W(), active);
    Vector g(static_cast<Eigen::Index>(active.size()));
    Vector a(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
        const Site& s = net.site(active[k]);
        g(static_cast<Eigen::Index>(k)) = *s.base_sales;
        a(static_cast<Eigen::Index>(k)) = *s.addon_sales;
    }
    MoranTable t;
    t.base = morans_test_analytic(Wa, g);
    t.addon = morans_test_analytic(Wa, a);
    t.residual = residual_moran(Wa, a, g, permutations, Rng::derive(seed, "moran-residual"));
    return t;
}

namespace {

void moran_row(std::string& out, const char* name, const MoranResult& r) {
    out += name;
    out += ',' + format_double(r.I) + ',' + format_double(r.expected_I) + ',' +
           format_double(r.variance_I) + ',' + format_double(r.z) + ',' +
           format_double(r.p_value) + ',';
    out += r.method == MoranMethod::Analytic ? "analytic" : "permutation";
    out += ',' + std::to_string(r.permutations) + '\n';
}

}  // namespace

std::string moran_table_csv(const MoranTable& t) {
    std::string out = "variable,I,expected_I,variance_I,z,p_value,method,permutations\n";
    moran_row(out, "base_sales", t.base);
    moran_row(out, "addon_sales", t.addon);
    moran_row(out, "residuals", t.residual);
    return out;
}

std::string moran_table_text(const MoranTable& t) {
    std::ostringstream os;
    const auto line = [&](const char* name, const MoranResult& r) {
        os << name << ": I=" << r.I << " z=" << r.z << " p=" << r.p_value
           << (r.method == MoranMethod::Permutation
                   ? " (permutation, " + std::to_string(r.permutations) + ")"
                   : " (analytic)")
           << '\n';
    };
    line("base sales ", t.base);
    line("add-on sales", t.addon);
    line("residuals   ", t.residual);
    return os.str();
}

bool resolve_spatial_lag(FeaturePolicy policy, const MoranTable& t, double alpha) {
    switch (policy) {
        case FeaturePolicy::Force3: return false;
        case FeaturePolicy::Force4: return true;
        case FeaturePolicy::Auto: return t.base.p_value < alpha;
    }
    return false;
}

SelectionResult select_model(const Network& net, FeatureSpec spec, const RunConfig& cfg) {
    const auto& active = net.active_indices();
    CvPlan plan = cfg.cv_plan;
    plan.seed = Rng::derive(cfg.seed, "cv");
    const SplitBuilder build = network_split_builder(net, active, spec);
    const int rows = static_cast<int>(active.size());

    SelectionResult sel;
    sel.spec = spec;
    for (Family fam : {Family::Ols, Family::SvrLinear, Family::SvrRadial}) {
        Grid grid = fam == Family::SvrRadial ? cfg.grid_radial : cfg.grid_linear;
        GridSearchResult res = grid_search(rows, build, fam, grid, plan);
        res.best.tol = cfg.svr_tol;
        res.best.max_iter = cfg.svr_max_iter;
        sel.per_family.push_back({fam, std::move(res)});
    }

    // lowest mean RMSE; ties keep the earlier (simpler) family
    std::size_t winner = 0;
    for (std::size_t i = 1; i < sel.per_family.size(); ++i)
        if (sel.per_family[i].search.best_stats.mean_rmse <
            sel.per_family[winner].search.best_stats.mean_rmse)
            winner = i;
    sel.chosen = sel.per_family[winner].family;

    const FeatureBlock block = build_features(net, active, spec);
    auto [X, y] = supervised_rows(block);
    sel.model = fit_family(X, y, sel.per_family[winner].search.best, spec);
    return sel;
}

std::string selection_report_json(const SelectionResult& sel) {
    json js;
    js["chosen_family"] = family_name(sel.chosen);
    js["features"] = sel.spec.count();
    js["use_spatial_lag"] = sel.spec.use_spatial_lag;
    js["refit_on_all_data"] = true;  // final model retrained on every active site
    for (const FamilySelection& fs : sel.per_family) {
        json f;
        f["mean_rmse"] = fs.search.best_stats.mean_rmse;
        f["sd_rmse"] = fs.search.best_stats.sd_rmse;
        f["mean_mape"] = fs.search.best_stats.mean_mape;
        f["sd_mape"] = fs.search.best_stats.sd_mape;
        if (fs.family != Family::Ols) {
            f["c"] = fs.search.best.c;
            f["epsilon"] = fs.search.best.epsilon;
            if (fs.family == Family::SvrRadial) f["gamma"] = fs.search.best.gamma;
        }
        f["extensions"] = fs.search.extensions;
        f["capped_axes"] = fs.search.capped_axes;
        js["families"][family_name(fs.family)] = f;
    }
    return js.dump(2) + "\n";
}

std::string gains_csv(const SweepResult& sweep, const SimConfig& sim) {
    std::string out = "k";
    for (int s : sim.s_values) out += ",gain_s" + std::to_string(s);
    for (int s : sim.s_values) out += ",draws_s" + std::to_string(s);
    for (int s : sim.s_values) out += ",degenerate_s" + std::to_string(s);
    out += '\n';
    int k_max = 0;
    for (const auto& [key, cell] : sweep.table) k_max = std::max(k_max, key.second);
    for (int k = 1; k <= k_max; ++k) {
        out += std::to_string(k);
        for (int s : sim.s_values) {
            const auto it = sweep.table.find({s, k});
            out += ',' + (it != sweep.table.end() ? format_double(it->second.mean_gain) : "");
        }
        for (int s : sim.s_values) {
            const auto it = sweep.table.find({s, k});
            out += ',' + (it != sweep.table.end() ? std::to_string(it->second.draws_used) : "");
        }
        for (int s : sim.s_values) {
            const auto it = sweep.table.find({s, k});
            out += ',' + (it != sweep.table.end() ? std::to_string(it->second.degenerate) : "");
        }
        out += '\n';
    }
    return out;
}

std::string records_csv(const Network& net, const SweepResult& sweep) {
    std::string out = "region,s,draw,k,z0,zb,ze,gain,degenerate,chosen_eo,chosen_bm\n";
    const auto join_ids = [&](const std::vector<int>& idx) {
        std::string s;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i) s += ';';
            s += net.site(idx[i]).id;
        }
        return s;
    };
    for (const GainRecord& r : sweep.records) {
        out += r.region + ',' + std::to_string(r.s) + ',' + std::to_string(r.draw) + ',' +
               std::to_string(r.k) + ',' + format_double(r.z0) + ',' + format_double(r.zb) +
               ',' + format_double(r.ze) + ',' + format_double(r.gain) + ',' +
               (r.degenerate ? "1" : "0") + ',' + join_ids(r.chosen_eo) + ',' +
               join_ids(r.chosen_bm) + '\n';
    }
    return out;
}

namespace {

std::string cv_summary_csv(const SelectionResult& sel) {
    std::string out =
        "family,features,c,epsilon,gamma,mean_rmse,sd_rmse,mean_mape,sd_mape,"
        "extensions,capped_axes,nonconverged_fits\n";
    for (const FamilySelection& fs : sel.per_family) {
        const GridSearchResult& r = fs.search;
        std::string capped;
        for (std::size_t i = 0; i < r.capped_axes.size(); ++i) {
            if (i) capped += ';';
            capped += r.capped_axes[i];
        }
        out += family_name(fs.family) + ',' + std::to_string(sel.spec.count()) + ',';
        if (fs.family != Family::Ols)
            out += format_double(r.best.c) + ',' + format_double(r.best.epsilon) + ',' +
                   (fs.family == Family::SvrRadial ? format_double(r.best.gamma) : "");
        else
            out += ",,";
        out += ',' + format_double(r.best_stats.mean_rmse) + ',' +
               format_double(r.best_stats.sd_rmse) + ',' + format_double(r.best_stats.mean_mape) +
               ',' + format_double(r.best_stats.sd_mape) + ',' + std::to_string(r.extensions) +
               ',' + capped + ',' + std::to_string(r.best_stats.nonconverged_fits) + '\n';
    }
    return out;
}

SimConfig effective_sim(const RunConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seed;  // named sub-streams keep it separate from CV and Moran draws
    return sim;
}

std::string expansion_csv(const Network& net, const ExpansionProblem& problem,
                          const ExpansionSolution& sol) {
    const double z0 = evaluate_selection(problem, {});
    std::vector<bool> chosen(static_cast<std::size_t>(net.size()), false);
    for (int i : sol.chosen) chosen[static_cast<std::size_t>(i)] = true;

    std::string out = "id,base_sales,income,population,single_site_marginal,chosen\n";
    std::vector<int> cands = problem.candidates;
    std::sort(cands.begin(), cands.end(),
              [&](int a, int b) { return net.site(a).id < net.site(b).id; });
    for (int c : cands) {
        const Site& s = net.site(c);
        const double marginal = evaluate_selection(problem, {c}) - z0;
        out += s.id + ',' + (s.base_sales ? format_double(*s.base_sales) : "") + ',' +
               format_double(s.income) + ',' + format_double(s.population) + ',' +
               format_double(marginal) + ',' + (chosen[static_cast<std::size_t>(c)] ? "1" : "0") +
               '\n';
    }
    return out;
}

}  // namespace

std::string pipeline_run(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.sites_path.empty()) throw Error("config needs a 'sites' path");
    if (cfg.out_dir.empty()) throw Error("config needs an 'out_dir'");

    fs::create_directories(cfg.out_dir);
    const auto path = [&](const std::string& name) {
        return (fs::path(cfg.out_dir) / name).string();
    };

    json manifest;
    manifest["tool"] = "addopt";
    manifest["region"] = cfg.region;
    manifest["seed"] = cfg.seed;
    manifest["config"] = {
        {"sites", cfg.sites_path},
        {"metric", metric_name(cfg.metric)},
        {"feature_policy", policy_name(cfg.feature_policy)},
        {"alpha", cfg.alpha},
        {"permutations", cfg.permutations},
        {"cv", {{"repeats", cfg.cv_plan.repeats}, {"folds", cfg.cv_plan.folds}}},
        {"sim",
         {{"s_values", cfg.sim.s_values},
          {"draws", cfg.sim.draws_per_sigma},
          {"k_max", cfg.sim.k_max}}},
        {"map", {{"s", cfg.map_s}, {"draw", cfg.map_draw}, {"k", cfg.map_k}}},
        {"svr", {{"tol", cfg.svr_tol}, {"max_iter", cfg.svr_max_iter}}},
        {"exact",
         {{"time_limit_seconds", cfg.exact.time_limit_seconds},
          {"exhaustive_threshold", cfg.exact.exhaustive_threshold}}},
    };

    const auto stage = [](const char* name, auto&& fn) -> decltype(fn()) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error(std::string("stage '") + name + "' failed: " + e.what());
        }
    };

    // data
    const Network net =
        stage("load", [&] { return load_sites(cfg.sites_path, cfg.metric); });
    manifest["sites"] = {{"total", net.size()},
                         {"active", net.active_indices().size()},
                         {"candidates", net.candidate_indices().size()}};

    // spatial autocorrelation
    const MoranTable moran = stage("moran", [&] {
        return moran_table(net, cfg.permutations, cfg.seed);
    });
    write_file(path("moran.csv"), moran_table_csv(moran));

    // feature policy
    FeatureSpec spec;
    spec.use_spatial_lag = resolve_spatial_lag(cfg.feature_policy, moran, cfg.alpha);
    manifest["feature_policy"] = {{"requested", policy_name(cfg.feature_policy)},
                                  {"alpha", cfg.alpha},
                                  {"base_sales_p", moran.base.p_value},
                                  {"use_spatial_lag", spec.use_spatial_lag}};

    // model selection
    const SelectionResult sel = stage("select", [&] { return select_model(net, spec, cfg); });
    write_file(path("cv_table.csv"), cv_summary_csv(sel));
    save_model(sel.model, path("model.json"));
    write_file(path("selection.json"), selection_report_json(sel));
    manifest["selection"] = {{"family", family_name(sel.chosen)}};

    // one mapped expansion instance; real candidate sales when complete,
    // otherwise the simulation protocol's draw
    stage("optimize", [&] {
        const bool have_real_g =
            std::all_of(net.candidate_indices().begin(), net.candidate_indices().end(),
                        [&](int c) { return net.site(c).base_sales.has_value(); });
        const Network inst =
            have_real_g ? net : simulated_network(net, effective_sim(cfg), cfg.map_s, cfg.map_draw);
        const int k = std::min<int>(cfg.map_k, static_cast<int>(net.candidate_indices().size()));
        ExpansionProblem problem = make_problem(inst, sel.model, k);
        const ExpansionSolution sol = solve_auto(problem, cfg.exact);
        write_file(path("expansion.csv"), expansion_csv(inst, problem, sol));
        emit_map_svg(inst, sol, path("map.svg"));
        manifest["expansion"] = {{"k", k},
                                 {"solver", solver_name(sol.solver)},
                                 {"optimal", sol.optimal},
                                 {"objective", sol.objective_value},
                                 {"simulated_demand", !have_real_g}};
        return 0;
    });

    // gain sweep and robustness
    const SimConfig sim = effective_sim(cfg);
    if (sim.k_max > static_cast<int>(net.candidate_indices().size()))
        std::cerr << "warning: k_max " << sim.k_max << " capped to the candidate count "
                  << net.candidate_indices().size() << "\n";
    const SweepResult sweep = stage("experiment", [&] {
        return run_gain_sweep(net, sel.model, sim, cfg.region, cfg.exact);
    });
    write_file(path("gains.csv"), gains_csv(sweep, sim));
    write_file(path("records.csv"), records_csv(net, sweep));

    stage("robustness", [&] {
        for (const FamilySelection& fs : sel.per_family) {
            const FeatureBlock block = build_features(net, net.active_indices(), spec);
            auto [X, y] = supervised_rows(block);
            ModelConfig mc = fs.search.best;
            const DemandModel alt = fit_family(X, y, mc, spec);
            const SweepResult rob = robustness_check(net, sweep, alt, sim);
            write_file(path("robustness_" + family_name(fs.family) + ".csv"),
                       gains_csv(rob, sim));
        }
        return 0;
    });

    const std::string text = manifest.dump(2) + "\n";
    write_file(path("manifest.json"), text);
    return text;
}

}  // namespace addopt
