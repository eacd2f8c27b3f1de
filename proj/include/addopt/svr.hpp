#pragma once

#include "addopt/geo.hpp"

namespace addopt {

// Solution of the epsilon-SVR dual
//   min 1/2 (a-a*)' K (a-a*) + eps * sum(a+a*) - y'(a-a*)
//   s.t. sum(a-a*) = 0,  0 <= a, a* <= C
// solved by two-variable working-set decomposition with most-violating-pair
// selection. Deterministic: zero start, lowest-index tie breaking.
struct SvrDualResult {
    Vector beta;            // a - a*, one per training row
    double intercept = 0.0;
    bool converged = false;
    long iterations = 0;
    double dual_objective = 0.0;  // value being minimized
};

SvrDualResult solve_svr_dual(const Matrix& K, const Vector& y, double c, double epsilon,
                             double tol, long max_iter);

// Kernel matrices over standardized rows.
Matrix linear_kernel(const Matrix& X);
Matrix radial_kernel(const Matrix& X, double gamma);
double radial_kernel_value(const Vector& a, const Vector& b, double gamma);

}  // namespace addopt
