#include "addopt/geo.hpp"

#include <cmath>
#include <map>

#include "addopt/errors.hpp"

namespace addopt {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double haversine_miles(double lat1, double lon1, double lat2, double lon2) {
    const double phi1 = lat1 * kPi / 180.0;
    const double phi2 = lat2 * kPi / 180.0;
    const double dphi = (lat2 - lat1) * kPi / 180.0;
    const double dlam = (lon2 - lon1) * kPi / 180.0;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlam / 2.0);
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusMiles * std::asin(std::min(1.0, std::sqrt(h)));
}

double euclidean_degree_miles(double lat1, double lon1, double lat2, double lon2) {
    const double dlat = lat2 - lat1;
    const double dlon = lon2 - lon1;
    return kMilesPerDegree * std::sqrt(dlat * dlat + dlon * dlon);
}

void validate_site(const Site& s) {
    if (s.lat < -90.0 || s.lat > 90.0)
        throw Error("site '" + s.id + "': latitude " + std::to_string(s.lat) + " out of [-90, 90]");
    if (s.lon < -180.0 || s.lon > 180.0)
        throw Error("site '" + s.id + "': longitude " + std::to_string(s.lon) + " out of [-180, 180]");
    if (s.base_sales && *s.base_sales < 0.0)
        throw Error("site '" + s.id + "': negative base sales");
    if (s.addon_sales && *s.addon_sales < 0.0)
        throw Error("site '" + s.id + "': negative add-on sales");
    if (s.income < 0.0) throw Error("site '" + s.id + "': negative income");
    if (s.population < 0.0) throw Error("site '" + s.id + "': negative population");
    if (s.status == SiteStatus::Active) {
        if (!s.base_sales) throw MissingFieldError(s.id, "base_sales");
        if (!s.addon_sales) throw MissingFieldError(s.id, "addon_sales");
    }
}

}  // namespace

Matrix distance_matrix(const std::vector<Site>& sites, DistanceMetric metric) {
    const int n = static_cast<int>(sites.size());
    if (n < 2) throw Error("distance matrix needs at least 2 sites");
    Matrix D = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Site& a = sites[static_cast<std::size_t>(i)];
            const Site& b = sites[static_cast<std::size_t>(j)];
            const double d = metric == DistanceMetric::Haversine
                                 ? haversine_miles(a.lat, a.lon, b.lat, b.lon)
                                 : euclidean_degree_miles(a.lat, a.lon, b.lat, b.lon);
            if (d <= 0.0) throw DuplicateCoordinatesError(a.id, b.id);
            D(i, j) = d;
            D(j, i) = d;
        }
    }
    return D;
}

Matrix weight_matrix(const Matrix& D) {
    const Eigen::Index n = D.rows();
    Matrix W = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) W(i, j) = 1.0 / D(i, j);
    return W;
}

double lag_at(const Matrix& W, const std::vector<std::optional<double>>& g,
              const std::vector<int>& members, int site, const std::vector<std::string>& ids) {
    double sum = 0.0;
    for (int j : members) {
        if (j == site) continue;
        const auto& gj = g[static_cast<std::size_t>(j)];
        if (!gj) throw MissingSalesError(ids[static_cast<std::size_t>(j)]);
        sum += W(site, j) * *gj;
    }
    return sum;
}

Vector spatial_lag(const Matrix& W, const std::vector<std::optional<double>>& g,
                   const std::vector<int>& members, const std::vector<std::string>& ids) {
    Vector out(static_cast<Eigen::Index>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k)
        out(static_cast<Eigen::Index>(k)) = lag_at(W, g, members, members[k], ids);
    return out;
}

Matrix submatrix(const Matrix& M, const std::vector<int>& idx) {
    const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
    Matrix out(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            out(a, b) = M(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    return out;
}

Network::Network(std::vector<Site> sites, DistanceMetric metric)
    : sites_(std::move(sites)), metric_(metric) {
    if (sites_.size() < 2) throw Error("a network needs at least 2 sites");
    std::map<std::string, int> seen;
    for (int i = 0; i < size(); ++i) {
        const Site& s = sites_[static_cast<std::size_t>(i)];
        validate_site(s);
        auto [it, inserted] = seen.emplace(s.id, i);
        if (!inserted)
            throw Error("duplicate site id '" + s.id + "' at positions " +
                        std::to_string(it->second) + " and " + std::to_string(i));
        (s.status == SiteStatus::Active ? active_ : candidates_).push_back(i);
    }
    D_ = distance_matrix(sites_, metric_);
    W_ = weight_matrix(D_);
}

int Network::index_of(const std::string& id) const {
    for (int i = 0; i < size(); ++i)
        if (sites_[static_cast<std::size_t>(i)].id == id) return i;
    return -1;
}

std::vector<std::optional<double>> Network::base_sales() const {
    std::vector<std::optional<double>> g;
    g.reserve(sites_.size());
    for (const Site& s : sites_) g.push_back(s.base_sales);
    return g;
}

std::vector<std::string> Network::ids() const {
    std::vector<std::string> out;
    out.reserve(sites_.size());
    for (const Site& s : sites_) out.push_back(s.id);
    return out;
}

Network Network::with_candidate_sales(const Vector& g_candidates) const {
    if (g_candidates.size() != static_cast<Eigen::Index>(candidates_.size()))
        throw DimensionError("candidate sales vector length does not match candidate count");
    Network copy = *this;
    for (std::size_t k = 0; k < candidates_.size(); ++k)
        copy.sites_[static_cast<std::size_t>(candidates_[k])].base_sales =
            g_candidates(static_cast<Eigen::Index>(k));
    return copy;
}

}  // namespace addopt
