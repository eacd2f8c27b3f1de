#include "addopt/model.hpp"

#include <cmath>

#include "addopt/errors.hpp"
#include "addopt/svr.hpp"

namespace addopt {

Standardizer Standardizer::fit(const Matrix& X) {
    Standardizer s;
    const Eigen::Index d = X.cols();
    s.means_.resize(d);
    s.scales_.resize(d);
    for (Eigen::Index f = 0; f < d; ++f) {
        const double mean = X.col(f).mean();
        const double var = (X.col(f).array() - mean).square().sum() / X.rows();
        const double sd = std::sqrt(var);
        s.means_(f) = mean;
        s.scales_(f) = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

Standardizer Standardizer::identity(Eigen::Index dim) {
    Standardizer s;
    s.means_ = Vector::Zero(dim);
    s.scales_ = Vector::Ones(dim);
    return s;
}

Standardizer Standardizer::from_params(Vector means, Vector scales) {
    if (means.size() != scales.size())
        throw DimensionError("standardizer means/scales length mismatch");
    if ((scales.array() <= 0.0).any()) throw Error("standardizer scales must be positive");
    Standardizer s;
    s.means_ = std::move(means);
    s.scales_ = std::move(scales);
    return s;
}

Matrix Standardizer::transform(const Matrix& X) const {
    if (X.cols() != dim()) throw DimensionError("standardizer dimension mismatch");
    return (X.rowwise() - means_.transpose()).array().rowwise() / scales_.transpose().array();
}

Vector Standardizer::transform_row(const Vector& row) const {
    if (row.size() != dim()) throw DimensionError("standardizer dimension mismatch");
    return (row - means_).cwiseQuotient(scales_);
}

Matrix Standardizer::inverse(const Matrix& Z) const {
    if (Z.cols() != dim()) throw DimensionError("standardizer dimension mismatch");
    return (Z.array().rowwise() * scales_.transpose().array()).matrix().rowwise() +
           means_.transpose();
}

FeatureBlock build_features(const Network& net, const std::vector<int>& members,
                            FeatureSpec spec) {
    FeatureBlock block;
    block.members = members;
    block.X.resize(static_cast<Eigen::Index>(members.size()), spec.count());
    block.targets.reserve(members.size());

    for (int i : members) {
        const Site& s = net.site(i);
        if (!s.base_sales) throw MissingFieldError(s.id, "base_sales");
    }
    Vector lag;
    if (spec.use_spatial_lag) lag = spatial_lag(net.W(), net.base_sales(), members, net.ids());

    for (std::size_t r = 0; r < members.size(); ++r) {
        const Site& s = net.site(members[r]);
        const Eigen::Index row = static_cast<Eigen::Index>(r);
        Eigen::Index col = 0;
        block.X(row, col++) = *s.base_sales;
        if (spec.use_spatial_lag) block.X(row, col++) = lag(row);
        block.X(row, col++) = s.income;
        block.X(row, col) = s.population;
        block.targets.push_back(s.addon_sales);
    }
    return block;
}

std::pair<Matrix, Vector> supervised_rows(const FeatureBlock& block) {
    std::vector<Eigen::Index> rows;
    for (std::size_t r = 0; r < block.targets.size(); ++r)
        if (block.targets[r]) rows.push_back(static_cast<Eigen::Index>(r));
    if (rows.empty()) throw Error("no rows carry an add-on sales target");
    Matrix X(static_cast<Eigen::Index>(rows.size()), block.X.cols());
    Vector y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        X.row(static_cast<Eigen::Index>(k)) = block.X.row(rows[k]);
        y(static_cast<Eigen::Index>(k)) = *block.targets[static_cast<std::size_t>(rows[k])];
    }
    return {std::move(X), std::move(y)};
}

DemandModel fit_ols(const Matrix& X, const Vector& y, FeatureSpec spec) {
    const Eigen::Index n = X.rows(), d = X.cols();
    if (y.size() != n) throw DimensionError("X rows do not match y length");
    if (n <= d + 1) throw Error("OLS needs more rows than coefficients");
    Matrix A(n, d + 1);
    A.col(0).setOnes();
    A.rightCols(d) = X;
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    if (qr.rank() < d + 1) throw SingularDesignError();

    DemandModel m;
    m.spec = spec;
    m.standardizer = Standardizer::identity(d);
    m.model = OlsModel{qr.solve(y)};
    return m;
}

DemandModel fit_svr(const Matrix& X, const Vector& y, const SvrParams& params,
                    FeatureSpec spec) {
    if (y.size() != X.rows()) throw DimensionError("X rows do not match y length");
    if (params.kernel == Kernel::Radial && params.gamma <= 0.0)
        throw Error("radial kernel needs gamma > 0");

    const Standardizer std_ = Standardizer::fit(X);
    const Matrix Z = std_.transform(X);
    const Matrix K = params.kernel == Kernel::Linear ? linear_kernel(Z)
                                                     : radial_kernel(Z, params.gamma);
    const SvrDualResult dual =
        solve_svr_dual(K, y, params.c, params.epsilon, params.tol, params.max_iter);

    SvrModel svr;
    svr.kernel = params.kernel;
    svr.gamma = params.kernel == Kernel::Radial ? params.gamma : 0.0;
    svr.c = params.c;
    svr.epsilon = params.epsilon;
    svr.intercept = dual.intercept;
    svr.converged = dual.converged;
    svr.iterations = dual.iterations;

    std::vector<Eigen::Index> sv;
    for (Eigen::Index i = 0; i < dual.beta.size(); ++i)
        if (dual.beta(i) != 0.0) sv.push_back(i);
    svr.dual_coefs.resize(static_cast<Eigen::Index>(sv.size()));
    svr.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), Z.cols());
    for (std::size_t k = 0; k < sv.size(); ++k) {
        svr.dual_coefs(static_cast<Eigen::Index>(k)) = dual.beta(sv[k]);
        svr.support_vectors.row(static_cast<Eigen::Index>(k)) = Z.row(sv[k]);
    }

    DemandModel m;
    m.spec = spec;
    m.standardizer = std_;
    m.model = std::move(svr);
    return m;
}

double predict_site(const DemandModel& m, const Vector& raw_features) {
    if (raw_features.size() != m.feature_dim())
        throw DimensionError("feature row does not match model dimension");
    if (m.is_ols()) {
        const Vector& beta = m.ols().beta;
        return beta(0) + beta.tail(beta.size() - 1).dot(raw_features);
    }
    const SvrModel& svr = m.svr();
    const Vector z = m.standardizer.transform_row(raw_features);
    double acc = svr.intercept;
    for (Eigen::Index k = 0; k < svr.dual_coefs.size(); ++k) {
        const double ker = svr.kernel == Kernel::Linear
                               ? svr.support_vectors.row(k).dot(z)
                               : radial_kernel_value(svr.support_vectors.row(k).transpose(), z,
                                                     svr.gamma);
        acc += svr.dual_coefs(k) * ker;
    }
    return acc;
}

double predict_network(const DemandModel& m, const Network& net,
                       const std::vector<int>& members) {
    if (m.feature_dim() != m.spec.count())
        throw DimensionError("model feature spec does not match its dimension");
    const FeatureBlock block = build_features(net, members, m.spec);
    double total = 0.0;
    for (Eigen::Index r = 0; r < block.X.rows(); ++r)
        total += predict_site(m, block.X.row(r).transpose());
    return total;
}

AffineCoefficients affine_coefficients(const DemandModel& m) {
    if (m.is_ols()) {
        const Vector& beta = m.ols().beta;
        return {beta(0), beta.tail(beta.size() - 1)};
    }
    const SvrModel& svr = m.svr();
    if (svr.kernel != Kernel::Linear)
        throw NotAffineInFeaturesError("radial-kernel SVR is not affine in its features");
    // w in standardized space, folded back through z = (x - mean)/scale
    const Vector w = svr.support_vectors.transpose() * svr.dual_coefs;
    AffineCoefficients out;
    out.slopes = w.cwiseQuotient(m.standardizer.scales());
    out.intercept = svr.intercept - out.slopes.dot(m.standardizer.means());
    return out;
}

}  // namespace addopt
