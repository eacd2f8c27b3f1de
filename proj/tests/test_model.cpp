#include "doctest.h"

#include <cmath>

#include "addopt/errors.hpp"
#include "addopt/io.hpp"
#include "addopt/model.hpp"
#include "addopt/rng.hpp"
#include "oracle.hpp"
#include "synth.hpp"

using namespace addopt;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix X(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) X(r, c) = scale * rng.normal();
    return X;
}

}  // namespace

TEST_CASE("standardizer") {
    Rng rng(3);
    Matrix X = random_matrix(40, 4, rng, 100.0);
    X.col(2).array() += 5000.0;
    const Standardizer s = Standardizer::fit(X);

    SUBCASE("transform then inverse is the identity") {
        const Matrix back = s.inverse(s.transform(X));
        CHECK((back - X).cwiseAbs().maxCoeff() <= 1e-12 * 5000.0);
    }
    SUBCASE("standardized columns have zero mean unit variance") {
        const Matrix Z = s.transform(X);
        for (int c = 0; c < 4; ++c) {
            CHECK(Z.col(c).mean() == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(Z.col(c).squaredNorm() / 40.0 == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("constant columns keep scale 1") {
        Matrix C = X;
        C.col(1).setConstant(7.0);
        const Standardizer sc = Standardizer::fit(C);
        CHECK(sc.scales()(1) == 1.0);
        CHECK(sc.transform(C).col(1).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("feature building") {
    std::vector<Site> sites;
    const auto mk = [](const std::string& id, double lat, double g, double h, double p) {
        Site s;
        s.id = id;
        s.lat = lat;
        s.lon = 20.0;
        s.base_sales = g;
        s.income = h;
        s.population = p;
        s.status = SiteStatus::Candidate;
        return s;
    };
    sites.push_back(mk("a", 10.0, 50.0, 1000.0, 200.0));
    sites.push_back(mk("b", 10.0 + 2.0 / 69.0, 80.0, 1100.0, 300.0));
    sites.push_back(mk("c", 11.0, 60.0, 1200.0, 400.0));
    Network net(sites, DistanceMetric::EuclideanDegrees);

    SUBCASE("3-feature rows") {
        const FeatureBlock b = build_features(net, {0, 2}, FeatureSpec{false});
        CHECK(b.X.cols() == 3);
        CHECK(b.X(0, 0) == 50.0);
        CHECK(b.X(0, 1) == 1000.0);
        CHECK(b.X(0, 2) == 200.0);
    }
    SUBCASE("4-feature single member has zero lag") {
        const FeatureBlock b = build_features(net, {1}, FeatureSpec{true});
        CHECK(b.X(0, 1) == 0.0);
    }
    SUBCASE("4-feature pair at distance 2") {
        const FeatureBlock b = build_features(net, {0, 1}, FeatureSpec{true});
        CHECK(b.X(0, 1) == doctest::Approx(40.0).epsilon(1e-12));  // g_b / 2
        CHECK(b.X(1, 1) == doctest::Approx(25.0).epsilon(1e-12));  // g_a / 2
    }
    SUBCASE("missing base sales") {
        auto sites2 = sites;
        sites2[0].base_sales.reset();
        Network net2(sites2, DistanceMetric::EuclideanDegrees);
        CHECK_THROWS_AS(build_features(net2, {0, 1}, FeatureSpec{false}), MissingFieldError);
    }
}

TEST_CASE("OLS fitting") {
    Rng rng(11);

    SUBCASE("exact affine recovery") {
        const Matrix X = random_matrix(20, 3, rng, 10.0);
        Vector beta_true(4);
        beta_true << 5.0, 1.5, -2.0, 0.25;
        const Vector y = beta_true(0) + (X * beta_true.tail(3)).array();
        const DemandModel m = fit_ols(X, y);
        for (int i = 0; i < 4; ++i)
            CHECK(m.ols().beta(i) == doctest::Approx(beta_true(i)).epsilon(1e-8));
    }
    SUBCASE("constant target") {
        const Matrix X = random_matrix(15, 2, rng);
        const DemandModel m = fit_ols(X, Vector::Constant(15, 9.0));
        CHECK(m.ols().beta(0) == doctest::Approx(9.0).epsilon(1e-10));
        CHECK(std::abs(m.ols().beta(1)) < 1e-10);
        CHECK(std::abs(m.ols().beta(2)) < 1e-10);
    }
    SUBCASE("matches the normal-equation oracle") {
        for (int t = 0; t < 10; ++t) {
            const Matrix X = random_matrix(30, 4, rng, 3.0);
            Vector y(30);
            for (int i = 0; i < 30; ++i) y(i) = rng.normal(0.0, 2.0);
            const DemandModel m = fit_ols(X, y);
            const auto expect = oracle::ols_normal_equations(X, y);
            for (int i = 0; i < 5; ++i) {
                const double scale = std::max(1.0, std::abs(expect[static_cast<std::size_t>(i)]));
                CHECK(std::abs(m.ols().beta(i) - expect[static_cast<std::size_t>(i)]) <=
                      1e-8 * scale);
            }
        }
    }
    SUBCASE("rank-deficient design is rejected") {
        Matrix X = random_matrix(20, 3, rng);
        X.col(2) = 2.0 * X.col(0);
        Vector y(20);
        for (int i = 0; i < 20; ++i) y(i) = rng.normal();
        CHECK_THROWS_AS(fit_ols(X, y), SingularDesignError);
    }
    SUBCASE("needs more rows than coefficients") {
        const Matrix X = random_matrix(4, 3, rng);
        CHECK_THROWS_AS(fit_ols(X, Vector::Zero(4)), Error);
    }
    SUBCASE("residual mean is zero") {
        const Matrix X = random_matrix(25, 3, rng, 5.0);
        Vector y(25);
        for (int i = 0; i < 25; ++i) y(i) = rng.normal(10.0, 4.0);
        const DemandModel m = fit_ols(X, y);
        double resid_mean = 0.0;
        for (int i = 0; i < 25; ++i)
            resid_mean += y(i) - predict_site(m, X.row(i).transpose());
        CHECK(std::abs(resid_mean / 25.0) <= 1e-8 * y.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("predict_site") {
    SUBCASE("constant OLS model") {
        DemandModel m;
        m.standardizer = Standardizer::identity(3);
        Vector beta = Vector::Zero(4);
        beta(0) = 7.0;
        m.model = OlsModel{beta};
        Vector row(3);
        row << 123.0, -4.0, 9.0;
        CHECK(predict_site(m, row) == 7.0);
    }
    SUBCASE("SVR with no support vectors predicts the intercept") {
        DemandModel m;
        m.standardizer = Standardizer::identity(3);
        SvrModel s;
        s.kernel = Kernel::Linear;
        s.intercept = 3.25;
        s.dual_coefs = Vector(0);
        s.support_vectors = Matrix(0, 3);
        m.model = s;
        Vector row(3);
        row << 1.0, 2.0, 3.0;
        CHECK(predict_site(m, row) == 3.25);
    }
    SUBCASE("radial kernel at its own support vector") {
        DemandModel m;
        m.standardizer = Standardizer::identity(2);
        SvrModel s;
        s.kernel = Kernel::Radial;
        s.gamma = 0.37;
        s.intercept = 1.5;
        s.dual_coefs = Vector(1);
        s.dual_coefs << 1.0;
        s.support_vectors = Matrix(1, 2);
        s.support_vectors << 4.0, -2.0;
        m.model = s;
        Vector row(2);
        row << 4.0, -2.0;
        CHECK(predict_site(m, row) == doctest::Approx(2.5).epsilon(1e-15));
    }
    SUBCASE("dimension mismatch") {
        DemandModel m;
        m.standardizer = Standardizer::identity(3);
        m.model = OlsModel{Vector::Zero(4)};
        CHECK_THROWS_AS(predict_site(m, Vector::Zero(2)), DimensionError);
    }
}

TEST_CASE("predict_network") {
    const Network net = synth::small_region(21, 6, 4);
    const auto& active = net.active_indices();

    SUBCASE("constant model sums |members| * c") {
        DemandModel m;
        m.spec = FeatureSpec{false};
        m.standardizer = Standardizer::identity(3);
        Vector beta = Vector::Zero(4);
        beta(0) = 2.5;
        m.model = OlsModel{beta};
        CHECK(predict_network(m, net, active) ==
              doctest::Approx(2.5 * static_cast<double>(active.size())).epsilon(1e-12));
    }

    SUBCASE("4-feature OLS over two members expands to l + e terms") {
        DemandModel m;
        m.spec = FeatureSpec{true};
        m.standardizer = Standardizer::identity(4);
        Vector beta(5);
        beta << 3.0, 0.5, 2.0, 0.01, 0.002;  // b0, g, wg, h, p
        m.model = OlsModel{beta};
        const int i = active[0], j = active[1];
        const Site& si = net.site(i);
        const Site& sj = net.site(j);
        const double d = net.D()(i, j);
        const double li = 3.0 + 0.5 * *si.base_sales + 0.01 * si.income + 0.002 * si.population;
        const double lj = 3.0 + 0.5 * *sj.base_sales + 0.01 * sj.income + 0.002 * sj.population;
        const double eij = 2.0 * *sj.base_sales / d;
        const double eji = 2.0 * *si.base_sales / d;
        CHECK(predict_network(m, net, {i, j}) ==
              doctest::Approx(li + lj + eij + eji).epsilon(1e-12));
    }

    SUBCASE("3-feature models ignore geometry") {
        const FeatureBlock block = build_features(net, active, FeatureSpec{false});
        auto [X, y] = supervised_rows(block);
        const DemandModel m = fit_ols(X, y, FeatureSpec{false});
        const double before = predict_network(m, net, active);

        // move one site far away; totals must not change
        auto sites = net.sites();
        sites[static_cast<std::size_t>(active[0])].lat += 3.0;
        Network moved(sites);
        CHECK(predict_network(m, moved, active) == doctest::Approx(before).epsilon(1e-12));
    }

    SUBCASE("3-feature additivity over disjoint sets") {
        Rng rng(5);
        DemandModel m;
        m.spec = FeatureSpec{false};
        m.standardizer = Standardizer::identity(3);
        Vector beta(4);
        beta << rng.normal(), rng.normal(), rng.normal(), rng.normal();
        m.model = OlsModel{beta};
        const std::vector<int> a{active[0], active[2]};
        const std::vector<int> b{active[1], active[3], active[5]};
        std::vector<int> both = a;
        both.insert(both.end(), b.begin(), b.end());
        CHECK(predict_network(m, net, both) ==
              doctest::Approx(predict_network(m, net, a) + predict_network(m, net, b))
                  .epsilon(1e-12));
    }
}

TEST_CASE("OLS predictions are invariant to joint feature scaling") {
    Rng rng(31);
    const Matrix X = random_matrix(25, 3, rng, 4.0);
    Vector y(25);
    for (int i = 0; i < 25; ++i) y(i) = rng.normal(5.0, 2.0);
    const DemandModel m = fit_ols(X, y);

    Vector scale(3);
    scale << 10.0, 0.01, 1000.0;
    const Matrix Xs = X * scale.asDiagonal();
    const DemandModel ms = fit_ols(Xs, y);
    for (int i = 0; i < 25; ++i) {
        const Vector r = X.row(i).transpose();
        const Vector rs = Xs.row(i).transpose();
        CHECK(predict_site(ms, rs) == doctest::Approx(predict_site(m, r)).epsilon(1e-8));
    }
}

TEST_CASE("affine view of a linear SVR matches its predictions") {
    Rng rng(41);
    const Matrix X = random_matrix(30, 3, rng, 50.0);
    Vector y(30);
    for (int i = 0; i < 30; ++i) y(i) = 2.0 + 0.03 * X(i, 0) - 0.05 * X(i, 1) + rng.normal();
    const DemandModel m = fit_svr(X, y, {Kernel::Linear, 10.0, 0.05, 0.0, 1e-6, 1'000'000});
    const AffineCoefficients aff = affine_coefficients(m);
    for (int i = 0; i < 30; ++i) {
        const Vector row = X.row(i).transpose();
        const double direct = predict_site(m, row);
        const double via_affine = aff.intercept + aff.slopes.dot(row);
        CHECK(via_affine == doctest::Approx(direct).epsilon(1e-10));
    }

    SUBCASE("radial kernels have no affine view") {
        const DemandModel r = fit_svr(X, y, {Kernel::Radial, 10.0, 0.05, 0.1, 1e-4, 200'000});
        CHECK_THROWS_AS(affine_coefficients(r), NotAffineInFeaturesError);
    }
}

TEST_CASE("model serialization round trip") {
    Rng rng(53);
    const Matrix X = random_matrix(20, 4, rng, 30.0);
    Vector y(20);
    for (int i = 0; i < 20; ++i) y(i) = rng.normal(100.0, 20.0);

    SUBCASE("ols") {
        const DemandModel m = fit_ols(X, y, FeatureSpec{true});
        const std::string text = model_to_json(m);
        const DemandModel back = model_from_json(text);
        CHECK(model_to_json(back) == text);  // fixed point
        for (int i = 0; i < 5; ++i) CHECK(back.ols().beta(i) == m.ols().beta(i));
        CHECK(back.spec.use_spatial_lag);
    }
    SUBCASE("svr keeps predictions bit-exact") {
        const DemandModel m =
            fit_svr(X, y, {Kernel::Radial, 50.0, 0.1, 0.05, 1e-5, 500'000}, FeatureSpec{true});
        const DemandModel back = model_from_json(model_to_json(m));
        for (int i = 0; i < 20; ++i) {
            const Vector row = X.row(i).transpose();
            CHECK(predict_site(back, row) == predict_site(m, row));
        }
    }
}
