#pragma once

#include <cstdint>

#include "addopt/geo.hpp"

namespace addopt {

enum class MoranMethod { Analytic, Permutation };
enum class Alternative { Greater, Less, TwoSided };

struct MoranResult {
    double I = 0.0;
    double expected_I = 0.0;   // -1/(n-1)
    double variance_I = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    MoranMethod method = MoranMethod::Analytic;
    int permutations = 0;      // 0 if analytic
    Alternative alternative = Alternative::Greater;
};

// Global Moran's I: (n / sum W) * sum_ij w_ij (x_i - xbar)(x_j - xbar) / sum_i (x_i - xbar)^2.
double morans_i(const Matrix& W, const Vector& x);

// Normality-assumption test: z from the closed-form first two moments,
// one-sided upper-tail p by default.
MoranResult morans_test_analytic(const Matrix& W, const Vector& x,
                                 Alternative alt = Alternative::Greater);

// Randomization test: recompute I under seeded relabelings of x and report
// p = (1 + #{I_perm >= I_obs}) / (1 + permutations) for the Greater alternative.
MoranResult morans_test_permutation(const Matrix& W, const Vector& x, int permutations,
                                    std::uint64_t seed, Alternative alt = Alternative::Greater);

// OLS of y on X (intercept added), then the permutation test on the residuals.
MoranResult residual_moran(const Matrix& W, const Vector& y, const Matrix& X,
                           int permutations, std::uint64_t seed,
                           Alternative alt = Alternative::Greater);

// Upper-tail standard normal probability P(Z > z).
double normal_upper_tail(double z);

}  // namespace addopt
