#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "addopt/model.hpp"

namespace addopt {

double rmse(const Vector& predictions, const Vector& actuals);
// Mean absolute percent error, in percent. Throws ZeroActualError.
double mape(const Vector& predictions, const Vector& actuals);

struct CvPlan {
    int repeats = 50;
    int folds = 10;
    std::uint64_t seed = 0;

    // CI-scale profile for fast runs.
    static CvPlan quick(std::uint64_t seed = 0) { return {5, 5, seed}; }
};

enum class Family { Ols, SvrLinear, SvrRadial };

std::string family_name(Family f);

struct ModelConfig {
    Family family = Family::Ols;
    double c = 1.0;
    double epsilon = 0.1;
    double gamma = 1e-3;
    double tol = 1e-3;
    long max_iter = 1'000'000;
};

// Fit one model of the configured family on raw features.
DemandModel fit_family(const Matrix& X, const Vector& y, const ModelConfig& cfg,
                       FeatureSpec spec = {});

struct CvStats {
    double mean_rmse = 0.0, sd_rmse = 0.0;
    double mean_mape = 0.0, sd_mape = 0.0;
    int nonconverged_fits = 0;
};

struct FoldSplit {
    Matrix X_train;
    Vector y_train;
    Matrix X_test;
    Vector y_test;
};

// Produces the raw-feature view of one train/test split; row indices are
// positions in the CV row universe, not network indices.
using SplitBuilder =
    std::function<FoldSplit(const std::vector<int>& train_rows, const std::vector<int>& test_rows)>;

using FoldObserver = std::function<void(int repeat, int fold, const std::vector<int>& train_rows,
                                        const std::vector<int>& test_rows)>;

// Repeated k-fold CV. Per repeat the fold-level test metrics are averaged;
// mean/sd are taken across repeats. Deterministic in plan.seed.
CvStats cross_validate(int rows, const SplitBuilder& build, const ModelConfig& cfg,
                       const CvPlan& plan, const FoldObserver& observe = {});

// Plain-matrix convenience wrapper.
CvStats cross_validate(const Matrix& X, const Vector& y, const ModelConfig& cfg,
                       const CvPlan& plan);

// Network-backed splits with leakage-safe spatial lag: training rows see a
// lag over training members only; a held-out row's lag is computed against
// training members. When `lag_audit` is given, the exact member set used for
// each held-out row's lag is recorded there.
struct LagAuditEntry {
    std::vector<int> test_members;        // network indices held out
    std::vector<int> lag_members_used;    // network indices the test lag summed over
};
SplitBuilder network_split_builder(const Network& net, const std::vector<int>& members,
                                   FeatureSpec spec,
                                   std::vector<LagAuditEntry>* lag_audit = nullptr);

struct Grid {
    std::vector<double> c_values;
    std::vector<double> epsilon_values;
    std::vector<double> gamma_values;  // empty for non-radial families

    // C in {2^0..2^16}, eps in {0, 0.1, .., 1}, gamma in {1e-7..1e-3}.
    static Grid default_ranges(bool radial);
};

struct GridCell {
    double c = 0.0, epsilon = 0.0, gamma = 0.0;
    CvStats stats;
};

struct GridSearchResult {
    ModelConfig best;
    CvStats best_stats;
    std::vector<GridCell> table;            // every cell evaluated, ordered
    std::vector<std::string> capped_axes;   // axes pinned or extension-capped at the boundary
    int extensions = 0;
};

// Minimizes mean CV RMSE over the grid. A winning value on a grid edge
// extends the grid one step outward (C and gamma by the grid's own step
// ratio, epsilon by its arithmetic step) and the search repeats, until the
// winner is interior on every axis or an axis has been extended 20 times.
// An epsilon lower edge at 0 counts as interior. Ties prefer smaller C, then
// smaller gamma, then larger epsilon.
GridSearchResult grid_search(int rows, const SplitBuilder& build, Family family, Grid grid,
                             const CvPlan& plan);

}  // namespace addopt
