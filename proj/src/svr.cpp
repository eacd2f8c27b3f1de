#include "addopt/svr.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "addopt/errors.hpp"

namespace addopt {

Matrix linear_kernel(const Matrix& X) { return X * X.transpose(); }

double radial_kernel_value(const Vector& a, const Vector& b, double gamma) {
    return std::exp(-gamma * (a - b).squaredNorm());
}

Matrix radial_kernel(const Matrix& X, double gamma) {
    const Eigen::Index n = X.rows();
    Matrix K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = std::exp(-gamma * (X.row(i) - X.row(j)).squaredNorm());
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

// The dual is handled as a 2n-variable box-constrained QP
//   min 1/2 x' Qbar x + p' x,  z' x = 0,  0 <= x <= C
// with x = (a, a*), z = (+1.., -1..), Qbar[t,u] = z_t z_u K[t%n, u%n] and
// p = (eps - y; eps + y). Working-set steps follow the classic two-variable
// closed form; the pair is the first-order most violating one.
SvrDualResult solve_svr_dual(const Matrix& K, const Vector& y, double c, double epsilon,
                             double tol, long max_iter) {
    const Eigen::Index n = y.size();
    if (K.rows() != n || K.cols() != n) throw DimensionError("kernel matrix does not match y");
    if (n < 1) throw Error("SVR needs at least one training row");
    if (c <= 0.0) throw Error("SVR box constraint C must be positive");
    if (epsilon < 0.0) throw Error("SVR tube epsilon must be non-negative");

    const std::size_t m = static_cast<std::size_t>(2 * n);
    std::vector<double> x(m, 0.0), grad(m), p(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        p[static_cast<std::size_t>(i)] = epsilon - y(i);
        p[static_cast<std::size_t>(n + i)] = epsilon + y(i);
    }
    grad = p;  // gradient at x = 0

    const auto zsign = [n](std::size_t t) { return t < static_cast<std::size_t>(n) ? 1.0 : -1.0; };
    const auto base = [n](std::size_t t) {
        return static_cast<Eigen::Index>(t) < n ? static_cast<Eigen::Index>(t)
                                                : static_cast<Eigen::Index>(t) - n;
    };

    constexpr double kTau = 1e-12;
    const double inf = std::numeric_limits<double>::infinity();

    long iter = 0;
    bool converged = false;
    double last_m = 0.0, last_M = 0.0;
    while (true) {
        // most violating pair: i maximizes -z*grad over I_up, j minimizes it over I_low
        double best_up = -inf, best_low = inf;
        std::ptrdiff_t i = -1, j = -1;
        for (std::size_t t = 0; t < m; ++t) {
            const double v = -zsign(t) * grad[t];
            const bool positive_dir = zsign(t) > 0.0 ? x[t] < c : x[t] > 0.0;
            const bool negative_dir = zsign(t) > 0.0 ? x[t] > 0.0 : x[t] < c;
            if (positive_dir && v > best_up) {
                best_up = v;
                i = static_cast<std::ptrdiff_t>(t);
            }
            if (negative_dir && v < best_low) {
                best_low = v;
                j = static_cast<std::ptrdiff_t>(t);
            }
        }
        last_m = best_up;
        last_M = best_low;
        if (i < 0 || j < 0 || best_up - best_low <= tol) {
            converged = true;
            break;
        }
        if (iter >= max_iter) break;
        ++iter;

        const std::size_t ti = static_cast<std::size_t>(i), tj = static_cast<std::size_t>(j);
        const Eigen::Index bi = base(ti), bj = base(tj);
        const double zi = zsign(ti), zj = zsign(tj);
        double quad = K(bi, bi) + K(bj, bj) - 2.0 * K(bi, bj);
        if (quad <= 0.0) quad = kTau;

        const double old_xi = x[ti], old_xj = x[tj];
        if (zi != zj) {
            const double delta = (-grad[ti] - grad[tj]) / quad;
            const double diff = x[ti] - x[tj];
            x[ti] += delta;
            x[tj] += delta;
            if (diff > 0.0) {
                if (x[tj] < 0.0) { x[tj] = 0.0; x[ti] = diff; }
            } else {
                if (x[ti] < 0.0) { x[ti] = 0.0; x[tj] = -diff; }
            }
            if (diff > 0.0) {
                if (x[ti] > c) { x[ti] = c; x[tj] = c - diff; }
            } else {
                if (x[tj] > c) { x[tj] = c; x[ti] = c + diff; }
            }
        } else {
            const double delta = (grad[ti] - grad[tj]) / quad;
            const double sum = x[ti] + x[tj];
            x[ti] -= delta;
            x[tj] += delta;
            if (sum > c) {
                if (x[ti] > c) { x[ti] = c; x[tj] = sum - c; }
            } else {
                if (x[tj] < 0.0) { x[tj] = 0.0; x[ti] = sum; }
            }
            if (sum > c) {
                if (x[tj] > c) { x[tj] = c; x[ti] = sum - c; }
            } else {
                if (x[ti] < 0.0) { x[ti] = 0.0; x[tj] = sum; }
            }
        }

        const double dbi = zi * (x[ti] - old_xi);
        const double dbj = zj * (x[tj] - old_xj);
        for (Eigen::Index u = 0; u < n; ++u) {
            const double dg = K(u, bi) * dbi + K(u, bj) * dbj;
            grad[static_cast<std::size_t>(u)] += dg;
            grad[static_cast<std::size_t>(n + u)] -= dg;
        }
    }

    SvrDualResult out;
    out.converged = converged;
    out.iterations = iter;
    out.beta.resize(n);
    for (Eigen::Index i2 = 0; i2 < n; ++i2)
        out.beta(i2) = x[static_cast<std::size_t>(i2)] - x[static_cast<std::size_t>(n + i2)];

    // intercept from KKT: free variables pin it exactly, otherwise take the
    // midpoint of the feasible multiplier interval
    int free_count = 0;
    double free_sum = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        if (x[t] > 0.0 && x[t] < c) {
            ++free_count;
            free_sum += -zsign(t) * grad[t];
        }
    }
    out.intercept = free_count > 0 ? free_sum / free_count : 0.5 * (last_m + last_M);

    double obj = 0.0;
    for (std::size_t t = 0; t < m; ++t) obj += x[t] * (grad[t] + p[t]);
    out.dual_objective = 0.5 * obj;
    return out;
}

}  // namespace addopt
