#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace addopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class SiteStatus { Active, Candidate };
enum class DistanceMetric { Haversine, EuclideanDegrees };

// Mean Earth radius and the degree-to-mile factor used by the flat metric.
inline constexpr double kEarthRadiusMiles = 3958.8;
inline constexpr double kMilesPerDegree = 69.0;

struct Site {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    std::optional<double> base_sales;   // g, transactions/year
    std::optional<double> addon_sales;  // a, transactions/year
    double income = 0.0;                // h, USD median household income
    double population = 0.0;            // p
    SiteStatus status = SiteStatus::Candidate;
};

// Pairwise distances in miles. Throws DuplicateCoordinatesError if any two
// sites coincide (an inverse-distance weight would be undefined).
Matrix distance_matrix(const std::vector<Site>& sites, DistanceMetric metric);

// w_ij = 1/d_ij off the diagonal, 0 on it.
Matrix weight_matrix(const Matrix& D);

// Per-member inverse-distance-weighted sum of the other members' base sales.
// g is indexed by network position; only entries of `members` are read.
// Returns one value per member, in `members` order.
Vector spatial_lag(const Matrix& W, const std::vector<std::optional<double>>& g,
                   const std::vector<int>& members, const std::vector<std::string>& ids);

// Lag of a single site against a member set (the site itself is skipped if
// present). Used both for member lags and for held-out sites during CV.
double lag_at(const Matrix& W, const std::vector<std::optional<double>>& g,
              const std::vector<int>& members, int site, const std::vector<std::string>& ids);

// Square submatrix on the given rows/columns.
Matrix submatrix(const Matrix& M, const std::vector<int>& idx);

// Immutable, validated site collection with derived D and W matrices.
class Network {
public:
    explicit Network(std::vector<Site> sites,
                     DistanceMetric metric = DistanceMetric::Haversine);

    const std::vector<Site>& sites() const { return sites_; }
    const Site& site(int i) const { return sites_[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(sites_.size()); }
    DistanceMetric metric() const { return metric_; }
    const Matrix& D() const { return D_; }
    const Matrix& W() const { return W_; }

    const std::vector<int>& active_indices() const { return active_; }
    const std::vector<int>& candidate_indices() const { return candidates_; }

    // -1 when the id is unknown.
    int index_of(const std::string& id) const;

    // Base sales as an optional-valued vector indexed by network position.
    std::vector<std::optional<double>> base_sales() const;
    std::vector<std::string> ids() const;

    // Copy with candidate base sales replaced (one value per candidate, in
    // candidate_indices() order). D and W are unchanged.
    Network with_candidate_sales(const Vector& g_candidates) const;

private:
    std::vector<Site> sites_;
    DistanceMetric metric_;
    Matrix D_, W_;
    std::vector<int> active_, candidates_;
};

}  // namespace addopt
