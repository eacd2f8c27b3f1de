#include "addopt/moran.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "addopt/errors.hpp"
#include "addopt/rng.hpp"

namespace addopt {

namespace {

bool effectively_constant(const Vector& x) {
    const double xbar = x.mean();
    const double max_dev = (x.array() - xbar).abs().maxCoeff();
    const double scale = std::max(1.0, x.array().abs().maxCoeff());
    return max_dev <= 1e-12 * scale;
}

// I for pre-centered deviations; denominators precomputed by the callers so
// permutation replicates only pay for the numerator.
double moran_from_deviations(const Matrix& W, const Vector& dev, double s0, double ss) {
    const double cross = dev.dot(W * dev);  // w_ii = 0 keeps the diagonal out
    const double n = static_cast<double>(dev.size());
    return (n / s0) * (cross / ss);
}

}  // namespace

double normal_upper_tail(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double morans_i(const Matrix& W, const Vector& x) {
    const Eigen::Index n = x.size();
    if (n < 2) throw Error("Moran's I needs at least 2 observations");
    if (W.rows() != n || W.cols() != n)
        throw DimensionError("weight matrix does not match observation count");
    if (effectively_constant(x)) throw ConstantVectorError();
    const double s0 = W.sum();
    if (s0 == 0.0) throw EmptyWeightsError();
    const Vector dev = x.array() - x.mean();
    const double ss = dev.squaredNorm();
    if (ss <= 0.0) throw ConstantVectorError();
    return moran_from_deviations(W, dev, s0, ss);
}

MoranResult morans_test_analytic(const Matrix& W, const Vector& x, Alternative alt) {
    const Eigen::Index ni = x.size();
    if (ni < 3) throw Error("analytic Moran test needs at least 3 observations");
    const double I = morans_i(W, x);
    const double n = static_cast<double>(ni);

    const double s0 = W.sum();
    double s1 = 0.0;
    for (Eigen::Index i = 0; i < ni; ++i)
        for (Eigen::Index j = 0; j < ni; ++j) {
            const double w = W(i, j) + W(j, i);
            s1 += 0.5 * w * w;
        }
    double s2 = 0.0;
    for (Eigen::Index i = 0; i < ni; ++i) {
        const double r = W.row(i).sum() + W.col(i).sum();
        s2 += r * r;
    }

    const double e_i = -1.0 / (n - 1.0);
    const double var =
        (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n - 1.0) * (n + 1.0) * s0 * s0) - e_i * e_i;
    if (var <= 0.0) throw Error("Moran variance is non-positive; weights are degenerate");

    MoranResult r;
    r.I = I;
    r.expected_I = e_i;
    r.variance_I = var;
    r.z = (I - e_i) / std::sqrt(var);
    r.method = MoranMethod::Analytic;
    r.alternative = alt;
    switch (alt) {
        case Alternative::Greater: r.p_value = normal_upper_tail(r.z); break;
        case Alternative::Less: r.p_value = normal_upper_tail(-r.z); break;
        case Alternative::TwoSided: r.p_value = 2.0 * normal_upper_tail(std::abs(r.z)); break;
    }
    return r;
}

MoranResult morans_test_permutation(const Matrix& W, const Vector& x, int permutations,
                                    std::uint64_t seed, Alternative alt) {
    if (permutations < 99) throw Error("permutation test needs at least 99 permutations");
    const Eigen::Index ni = x.size();
    if (ni < 2) throw Error("Moran's I needs at least 2 observations");
    if (W.rows() != ni || W.cols() != ni)
        throw DimensionError("weight matrix does not match observation count");
    if (effectively_constant(x)) throw ConstantVectorError();
    const double s0 = W.sum();
    if (s0 == 0.0) throw EmptyWeightsError();

    const Vector dev = x.array() - x.mean();
    const double ss = dev.squaredNorm();
    if (ss <= 0.0) throw ConstantVectorError();
    const double observed = moran_from_deviations(W, dev, s0, ss);

    const double n = static_cast<double>(ni);
    const double e_i = -1.0 / (n - 1.0);

    Rng rng(seed);
    std::vector<double> shuffled(dev.data(), dev.data() + dev.size());
    int count_ge = 0, count_le = 0, count_two = 0;
    double sum = 0.0, sum_sq = 0.0;
    Vector perm(ni);
    for (int p = 0; p < permutations; ++p) {
        rng.shuffle(shuffled);
        for (Eigen::Index i = 0; i < ni; ++i) perm(i) = shuffled[static_cast<std::size_t>(i)];
        const double ip = moran_from_deviations(W, perm, s0, ss);
        if (ip >= observed) ++count_ge;
        if (ip <= observed) ++count_le;
        if (std::abs(ip - e_i) >= std::abs(observed - e_i)) ++count_two;
        sum += ip;
        sum_sq += ip * ip;
    }

    const double mean = sum / permutations;
    const double var = std::max(0.0, sum_sq / permutations - mean * mean);

    MoranResult r;
    r.I = observed;
    r.expected_I = e_i;
    r.variance_I = var;
    r.z = var > 0.0 ? (observed - mean) / std::sqrt(var) : 0.0;
    r.method = MoranMethod::Permutation;
    r.permutations = permutations;
    r.alternative = alt;
    const double denom = 1.0 + permutations;
    switch (alt) {
        case Alternative::Greater: r.p_value = (1.0 + count_ge) / denom; break;
        case Alternative::Less: r.p_value = (1.0 + count_le) / denom; break;
        case Alternative::TwoSided: r.p_value = (1.0 + count_two) / denom; break;
    }
    return r;
}

MoranResult residual_moran(const Matrix& W, const Vector& y, const Matrix& X,
                           int permutations, std::uint64_t seed, Alternative alt) {
    const Eigen::Index n = y.size();
    if (X.rows() != n) throw DimensionError("X rows do not match y length");
    Matrix A(n, X.cols() + 1);
    A.col(0).setOnes();
    A.rightCols(X.cols()) = X;

    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() < A.cols()) throw SingularDesignError();
    const Vector beta = qr.solve(y);
    const Vector resid = y - A * beta;

    // An exact fit leaves numerical noise, not zeros; judge against y's scale.
    const double y_scale = std::max(1.0, y.array().abs().maxCoeff());
    if (resid.array().abs().maxCoeff() <= 1e-9 * y_scale) throw ConstantVectorError();

    return morans_test_permutation(W, resid, permutations, seed, alt);
}

}  // namespace addopt
