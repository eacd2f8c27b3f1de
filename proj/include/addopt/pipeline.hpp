#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "addopt/cv.hpp"
#include "addopt/experiment.hpp"
#include "addopt/moran.hpp"

namespace addopt {

enum class FeaturePolicy { Auto, Force3, Force4 };

struct RunConfig {
    std::string region = "region";
    std::string sites_path;
    std::string out_dir;
    DistanceMetric metric = DistanceMetric::Haversine;
    FeaturePolicy feature_policy = FeaturePolicy::Auto;
    double alpha = 0.05;          // Moran significance gate for the Wg feature
    int permutations = 999;
    CvPlan cv_plan{50, 10, 0};    // seed filled from `seed`
    Grid grid_linear = Grid::default_ranges(false);
    Grid grid_radial = Grid::default_ranges(true);
    SimConfig sim;
    int map_s = 6;                // instance drawn for the emitted map
    int map_draw = 0;
    int map_k = 10;
    double svr_tol = 1e-3;
    long svr_max_iter = 1'000'000;
    ExactOptions exact;
    std::uint64_t seed = 0;
};

RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

// Three-row Moran report over the active sites: base sales and add-on sales
// (analytic, mirroring moran.test) plus the add-on-on-base regression
// residuals (permutation).
struct MoranTable {
    MoranResult base, addon, residual;
};
MoranTable moran_table(const Network& net, int permutations, std::uint64_t seed);
std::string moran_table_csv(const MoranTable& t);
std::string moran_table_text(const MoranTable& t);

// Whether the Wg feature enters, given the policy and the base-sales test.
bool resolve_spatial_lag(FeaturePolicy policy, const MoranTable& t, double alpha);

struct FamilySelection {
    Family family;
    GridSearchResult search;
};

struct SelectionResult {
    FeatureSpec spec;
    std::vector<FamilySelection> per_family;  // ols, svr_linear, svr_radial
    Family chosen;
    DemandModel model;  // refit on all active data with the winning settings
};

// Grid searches every family on the given feature spec, picks the lowest
// mean-RMSE family (ties prefer OLS, then linear SVR), refits on all data.
SelectionResult select_model(const Network& net, FeatureSpec spec, const RunConfig& cfg);

// The chosen-P* report (family, hyperparameters, per-family CV stats).
std::string selection_report_json(const SelectionResult& sel);

// Full pipeline: moran -> feature policy -> CV/grid search -> select ->
// optimize one mapped instance -> gain sweep -> robustness -> manifest.
// Writes its artifact set under cfg.out_dir and returns the manifest JSON.
std::string pipeline_run(const RunConfig& cfg);

std::string gains_csv(const SweepResult& sweep, const SimConfig& sim);
std::string records_csv(const Network& net, const SweepResult& sweep);

}  // namespace addopt
