#pragma once

#include <variant>
#include <vector>

#include "addopt/model.hpp"

namespace addopt {

// Objective forms for the expansion problem. Coefficients are indexed by
// network position over all of N = S u S~.
struct LinearCoeffs {
    Vector l;
};
struct QuadraticCoeffs {
    Vector l;
    Matrix e;  // e(i,i) = 0
};
struct BlackBox {
    const DemandModel* model = nullptr;
};

struct ExpansionProblem {
    const Network* network = nullptr;
    std::vector<int> fixed;       // S, always selected
    std::vector<int> candidates;  // S~
    int budget = 1;               // K
    std::variant<LinearCoeffs, QuadraticCoeffs, BlackBox> objective;
};

enum class SolverKind { Baseline, SortTopK, ExactQuadratic, Greedy, Exhaustive };

const char* solver_name(SolverKind k);

struct ExpansionSolution {
    std::vector<int> chosen;  // candidate network indices, sorted by site id
    double objective_value = 0.0;
    SolverKind solver = SolverKind::Greedy;
    bool optimal = false;
};

// Objective value of S u chosen under the problem's objective form.
double evaluate_selection(const ExpansionProblem& problem, const std::vector<int>& chosen);

// l_i = prediction at site i for a lag-free affine model, with the
// standardizer folded into raw-space coefficients.
// Throws SpatialModelNotLinearizableError otherwise.
Vector derive_linear_coeffs(const DemandModel& m, const Network& net);

// l_i and e_ij = beta_wg * g_j / d_ij for a 4-feature affine model, so that
// sum_l + sum_e over any member set equals predict_network.
// Throws NotAffineInFeaturesError for radial kernels.
std::pair<Vector, Matrix> derive_quadratic_coeffs(const DemandModel& m, const Network& net);

ExpansionSolution solve_sort_topk(const ExpansionProblem& problem);

struct ExactOptions {
    double time_limit_seconds = 60.0;
    // below this subset count the solver enumerates instead of branching
    double exhaustive_threshold = 1e6;
};
ExpansionSolution solve_exact_quadratic(const ExpansionProblem& problem,
                                        const ExactOptions& opts = {});

ExpansionSolution solve_greedy(const ExpansionProblem& problem);

// Top-K candidates by base sales, evaluated under the problem objective.
ExpansionSolution solve_baseline(const ExpansionProblem& problem);

// Builds the problem from a fitted model: linear coefficients for lag-free
// affine models, quadratic for lag-bearing affine ones, black box otherwise.
ExpansionProblem make_problem(const Network& net, const DemandModel& m, int budget);

// Solver choice matching the problem form: sort / exact / greedy.
ExpansionSolution solve_auto(const ExpansionProblem& problem, const ExactOptions& opts = {});

}  // namespace addopt
