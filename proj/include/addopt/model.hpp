#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "addopt/geo.hpp"

namespace addopt {

// Canonical feature layout: (g, Wg, h, p) with the lag, (g, h, p) without.
struct FeatureSpec {
    bool use_spatial_lag = false;

    int count() const { return use_spatial_lag ? 4 : 3; }
    std::vector<std::string> names() const {
        return use_spatial_lag ? std::vector<std::string>{"g", "wg", "h", "p"}
                               : std::vector<std::string>{"g", "h", "p"};
    }
    bool operator==(const FeatureSpec&) const = default;
};

// Column-wise z-score transform. Constant columns keep scale 1 so the
// transform stays invertible.
class Standardizer {
public:
    static Standardizer fit(const Matrix& X);
    static Standardizer identity(Eigen::Index dim);
    // Rebuild from stored parameters (model deserialization).
    static Standardizer from_params(Vector means, Vector scales);

    Matrix transform(const Matrix& X) const;
    Vector transform_row(const Vector& row) const;
    Matrix inverse(const Matrix& Z) const;

    const Vector& means() const { return means_; }
    const Vector& scales() const { return scales_; }
    Eigen::Index dim() const { return means_.size(); }

private:
    Vector means_, scales_;
};

enum class Kernel { Linear, Radial };

// Ordinary least squares in raw feature space; beta(0) is the intercept.
struct OlsModel {
    Vector beta;
};

// epsilon-SVR in standardized feature space.
struct SvrModel {
    Kernel kernel = Kernel::Linear;
    double gamma = 0.0;     // radial width, ignored for linear
    double c = 1.0;         // box constraint
    double epsilon = 0.1;   // tube half-width
    Vector dual_coefs;      // signed alpha - alpha*, one per support vector
    Matrix support_vectors; // rows, standardized space
    double intercept = 0.0;
    bool converged = true;
    long iterations = 0;
};

struct DemandModel {
    FeatureSpec spec;
    Standardizer standardizer;  // identity for OLS
    std::variant<OlsModel, SvrModel> model;

    bool is_ols() const { return std::holds_alternative<OlsModel>(model); }
    const OlsModel& ols() const { return std::get<OlsModel>(model); }
    const SvrModel& svr() const { return std::get<SvrModel>(model); }

    // OLS or linear-kernel SVR: the prediction is affine in raw features.
    bool is_affine() const {
        return is_ols() || svr().kernel == Kernel::Linear;
    }
    Eigen::Index feature_dim() const {
        return is_ols() ? ols().beta.size() - 1 : standardizer.dim();
    }
};

struct FeatureBlock {
    Matrix X;                                    // one row per member, canonical order
    std::vector<int> members;                    // network index per row
    std::vector<std::optional<double>> targets;  // add-on sales where known
};

// Feature rows for `members`; the spatial lag (when requested) is computed
// over `members` only, matching the selected-network definition.
FeatureBlock build_features(const Network& net, const std::vector<int>& members,
                            FeatureSpec spec);

// Targets for rows whose add-on sales are known; throws if none are.
std::pair<Matrix, Vector> supervised_rows(const FeatureBlock& block);

DemandModel fit_ols(const Matrix& X, const Vector& y, FeatureSpec spec = {});

struct SvrParams {
    Kernel kernel = Kernel::Linear;
    double c = 1.0;
    double epsilon = 0.1;
    double gamma = 1e-3;
    double tol = 1e-3;
    long max_iter = 1'000'000;
};

DemandModel fit_svr(const Matrix& X, const Vector& y, const SvrParams& params,
                    FeatureSpec spec = {});

// Prediction on a raw (unstandardized) feature row in canonical order.
double predict_site(const DemandModel& m, const Vector& raw_features);

// Total predicted add-on sales over a member set; rebuilds features (and lag)
// for that set. The single evaluation entry point used by every optimizer.
double predict_network(const DemandModel& m, const Network& net,
                       const std::vector<int>& members);

// Raw-space affine view of an affine model: prediction = intercept + slopes.x.
// Folds the standardizer back into raw coordinates for SVR.
struct AffineCoefficients {
    double intercept = 0.0;
    Vector slopes;  // canonical feature order
};
AffineCoefficients affine_coefficients(const DemandModel& m);

}  // namespace addopt
