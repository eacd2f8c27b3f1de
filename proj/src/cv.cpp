#include "addopt/cv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "addopt/errors.hpp"
#include "addopt/rng.hpp"

namespace addopt {

double rmse(const Vector& predictions, const Vector& actuals) {
    if (predictions.size() != actuals.size()) throw DimensionError("rmse: length mismatch");
    if (predictions.size() == 0) throw Error("rmse: empty input");
    return std::sqrt((predictions - actuals).squaredNorm() / predictions.size());
}

double mape(const Vector& predictions, const Vector& actuals) {
    if (predictions.size() != actuals.size()) throw DimensionError("mape: length mismatch");
    if (predictions.size() == 0) throw Error("mape: empty input");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < actuals.size(); ++i) {
        if (actuals(i) == 0.0) throw ZeroActualError(static_cast<std::size_t>(i));
        acc += std::abs(predictions(i) - actuals(i)) / std::abs(actuals(i));
    }
    return acc / actuals.size() * 100.0;
}

std::string family_name(Family f) {
    switch (f) {
        case Family::Ols: return "ols";
        case Family::SvrLinear: return "svr_linear";
        case Family::SvrRadial: return "svr_radial";
    }
    return "?";
}

DemandModel fit_family(const Matrix& X, const Vector& y, const ModelConfig& cfg,
                       FeatureSpec spec) {
    switch (cfg.family) {
        case Family::Ols:
            return fit_ols(X, y, spec);
        case Family::SvrLinear:
            return fit_svr(X, y,
                           {Kernel::Linear, cfg.c, cfg.epsilon, 0.0, cfg.tol, cfg.max_iter}, spec);
        case Family::SvrRadial:
            return fit_svr(
                X, y, {Kernel::Radial, cfg.c, cfg.epsilon, cfg.gamma, cfg.tol, cfg.max_iter},
                spec);
    }
    throw Error("unknown model family");
}

namespace {

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (v.size() - 1));
}

}  // namespace

CvStats cross_validate(int rows, const SplitBuilder& build, const ModelConfig& cfg,
                       const CvPlan& plan, const FoldObserver& observe) {
    if (plan.folds < 2) throw Error("CV needs at least 2 folds");
    if (plan.repeats < 1) throw Error("CV needs at least 1 repeat");
    if (rows < plan.folds) throw Error("CV needs at least as many rows as folds");

    std::vector<double> repeat_rmse, repeat_mape;
    int nonconverged = 0;

    for (int rep = 0; rep < plan.repeats; ++rep) {
        std::vector<int> order(static_cast<std::size_t>(rows));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(Rng::derive(plan.seed, "cv-fold", static_cast<std::uint64_t>(rep)));
        rng.shuffle(order);

        double rmse_acc = 0.0, mape_acc = 0.0;
        const int base = rows / plan.folds, extra = rows % plan.folds;
        int cursor = 0;
        for (int fold = 0; fold < plan.folds; ++fold) {
            const int len = base + (fold < extra ? 1 : 0);
            std::vector<int> test(order.begin() + cursor, order.begin() + cursor + len);
            std::vector<int> train;
            train.reserve(static_cast<std::size_t>(rows - len));
            train.insert(train.end(), order.begin(), order.begin() + cursor);
            train.insert(train.end(), order.begin() + cursor + len, order.end());
            cursor += len;
            std::sort(test.begin(), test.end());
            std::sort(train.begin(), train.end());
            if (observe) observe(rep, fold, train, test);

            FoldSplit split = build(train, test);
            DemandModel model;
            try {
                model = fit_family(split.X_train, split.y_train, cfg);
            } catch (const Error& e) {
                throw Error("CV fit failed at repeat " + std::to_string(rep) + ", fold " +
                            std::to_string(fold) + ": " + e.what());
            }
            if (!model.is_ols() && !model.svr().converged) ++nonconverged;

            Vector pred(split.X_test.rows());
            for (Eigen::Index r = 0; r < split.X_test.rows(); ++r)
                pred(r) = predict_site(model, split.X_test.row(r).transpose());
            rmse_acc += rmse(pred, split.y_test);
            mape_acc += mape(pred, split.y_test);
        }
        repeat_rmse.push_back(rmse_acc / plan.folds);
        repeat_mape.push_back(mape_acc / plan.folds);
    }

    CvStats out;
    out.mean_rmse = std::accumulate(repeat_rmse.begin(), repeat_rmse.end(), 0.0) / plan.repeats;
    out.mean_mape = std::accumulate(repeat_mape.begin(), repeat_mape.end(), 0.0) / plan.repeats;
    out.sd_rmse = sample_sd(repeat_rmse);
    out.sd_mape = sample_sd(repeat_mape);
    out.nonconverged_fits = nonconverged;
    return out;
}

CvStats cross_validate(const Matrix& X, const Vector& y, const ModelConfig& cfg,
                       const CvPlan& plan) {
    const auto slice = [&](const std::vector<int>& rows_idx, Matrix& Xs, Vector& ys) {
        Xs.resize(static_cast<Eigen::Index>(rows_idx.size()), X.cols());
        ys.resize(static_cast<Eigen::Index>(rows_idx.size()));
        for (std::size_t k = 0; k < rows_idx.size(); ++k) {
            Xs.row(static_cast<Eigen::Index>(k)) = X.row(rows_idx[k]);
            ys(static_cast<Eigen::Index>(k)) = y(rows_idx[k]);
        }
    };
    SplitBuilder build = [&](const std::vector<int>& train, const std::vector<int>& test) {
        FoldSplit s;
        slice(train, s.X_train, s.y_train);
        slice(test, s.X_test, s.y_test);
        return s;
    };
    return cross_validate(static_cast<int>(X.rows()), build, cfg, plan);
}

SplitBuilder network_split_builder(const Network& net, const std::vector<int>& members,
                                   FeatureSpec spec, std::vector<LagAuditEntry>* lag_audit) {
    for (int i : members) {
        const Site& s = net.site(i);
        if (!s.base_sales) throw MissingFieldError(s.id, "base_sales");
        if (!s.addon_sales) throw MissingFieldError(s.id, "addon_sales");
    }
    // members and spec are captured by value; the network must outlive the builder
    return [&net, members, spec, lag_audit](const std::vector<int>& train,
                                            const std::vector<int>& test) {
        std::vector<int> train_members, test_members;
        train_members.reserve(train.size());
        test_members.reserve(test.size());
        for (int r : train) train_members.push_back(members[static_cast<std::size_t>(r)]);
        for (int r : test) test_members.push_back(members[static_cast<std::size_t>(r)]);

        const auto g = net.base_sales();
        const auto ids = net.ids();

        const auto fill = [&](const std::vector<int>& mem, bool held_out, Matrix& X, Vector& y,
                              std::vector<int>* lag_used) {
            X.resize(static_cast<Eigen::Index>(mem.size()), spec.count());
            y.resize(static_cast<Eigen::Index>(mem.size()));
            for (std::size_t r = 0; r < mem.size(); ++r) {
                const Site& s = net.site(mem[r]);
                const Eigen::Index row = static_cast<Eigen::Index>(r);
                Eigen::Index col = 0;
                X(row, col++) = *s.base_sales;
                if (spec.use_spatial_lag) {
                    // held-out rows sum over training members only
                    X(row, col++) = lag_at(net.W(), g, train_members, mem[r], ids);
                    if (held_out && lag_used)
                        lag_used->insert(lag_used->end(), train_members.begin(),
                                         train_members.end());
                }
                X(row, col++) = s.income;
                X(row, col) = s.population;
                y(row) = *s.addon_sales;
            }
        };

        FoldSplit split;
        std::vector<int> lag_used;
        fill(train_members, false, split.X_train, split.y_train, nullptr);
        fill(test_members, true, split.X_test, split.y_test, &lag_used);
        if (lag_audit) {
            std::sort(lag_used.begin(), lag_used.end());
            lag_used.erase(std::unique(lag_used.begin(), lag_used.end()), lag_used.end());
            lag_audit->push_back({test_members, std::move(lag_used)});
        }
        return split;
    };
}

Grid Grid::default_ranges(bool radial) {
    Grid g;
    for (int e = 0; e <= 16; ++e) g.c_values.push_back(std::ldexp(1.0, e));
    for (int i = 0; i <= 10; ++i) g.epsilon_values.push_back(i / 10.0);
    if (radial)
        for (int e = -7; e <= -3; ++e) g.gamma_values.push_back(std::pow(10.0, e));
    return g;
}

namespace {

struct Axis {
    std::vector<double> values;  // sorted ascending, unique
    bool pinned = false;         // single-value axes never extend
    int extensions = 0;
    bool capped = false;

    double lo() const { return values.front(); }
    double hi() const { return values.back(); }
};

Axis make_axis(std::vector<double> vals) {
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    Axis a;
    a.values = std::move(vals);
    a.pinned = a.values.size() < 2;
    return a;
}

constexpr int kMaxExtensionsPerAxis = 20;

// tie order: smaller C, then smaller gamma, then larger epsilon
bool cell_wins(const GridCell& a, const GridCell& b) {
    if (a.stats.mean_rmse != b.stats.mean_rmse) return a.stats.mean_rmse < b.stats.mean_rmse;
    if (a.c != b.c) return a.c < b.c;
    if (a.gamma != b.gamma) return a.gamma < b.gamma;
    return a.epsilon > b.epsilon;
}

}  // namespace

GridSearchResult grid_search(int rows, const SplitBuilder& build, Family family, Grid grid,
                             const CvPlan& plan) {
    if (family == Family::Ols) {
        // nothing to tune; report the single cell
        ModelConfig cfg;
        cfg.family = Family::Ols;
        GridSearchResult res;
        res.best = cfg;
        res.best_stats = cross_validate(rows, build, cfg, plan);
        res.table.push_back({0.0, 0.0, 0.0, res.best_stats});
        return res;
    }

    const bool radial = family == Family::SvrRadial;
    if (grid.c_values.empty() || grid.epsilon_values.empty() ||
        (radial && grid.gamma_values.empty()))
        throw Error("grid search needs a non-empty grid on every axis");
    for (double c : grid.c_values)
        if (c <= 0.0) throw Error("grid C values must be positive");
    for (double eps : grid.epsilon_values)
        if (eps < 0.0) throw Error("grid epsilon values must be non-negative");
    for (double g : grid.gamma_values)
        if (g <= 0.0) throw Error("grid gamma values must be positive");

    Axis c_axis = make_axis(grid.c_values);
    Axis eps_axis = make_axis(grid.epsilon_values);
    Axis gamma_axis = radial ? make_axis(grid.gamma_values) : make_axis({0.0});
    if (!radial) gamma_axis.pinned = true;

    std::map<std::array<double, 3>, CvStats> cache;
    const auto evaluate = [&](double c, double eps, double gamma) -> const CvStats& {
        const std::array<double, 3> key{c, eps, gamma};
        auto it = cache.find(key);
        if (it == cache.end()) {
            ModelConfig cfg;
            cfg.family = family;
            cfg.c = c;
            cfg.epsilon = eps;
            cfg.gamma = gamma;
            it = cache.emplace(key, cross_validate(rows, build, cfg, plan)).first;
        }
        return it->second;
    };

    GridCell best{};
    bool have_best = false;
    while (true) {
        for (double c : c_axis.values)
            for (double eps : eps_axis.values)
                for (double gamma : gamma_axis.values) {
                    GridCell cell{c, eps, gamma, evaluate(c, eps, gamma)};
                    if (!have_best || cell_wins(cell, best)) {
                        best = cell;
                        have_best = true;
                    }
                }

        // geometric step for C and gamma, arithmetic for epsilon
        bool extended = false;
        const auto extend = [&](Axis& axis, double value, bool geometric,
                                bool zero_floor) {
            if (axis.pinned) {
                axis.capped = true;
                return;
            }
            const bool at_lo = value == axis.lo();
            const bool at_hi = value == axis.hi();
            if (!at_lo && !at_hi) return;
            if (at_lo && zero_floor && axis.lo() == 0.0) return;  // domain edge, interior by fiat
            if (axis.extensions >= kMaxExtensionsPerAxis) {
                axis.capped = true;
                return;
            }
            double next;
            const std::size_t m = axis.values.size();
            if (geometric) {
                next = at_hi ? axis.values[m - 1] * (axis.values[m - 1] / axis.values[m - 2])
                             : axis.values[0] * (axis.values[0] / axis.values[1]);
            } else {
                const double step = at_hi ? axis.values[m - 1] - axis.values[m - 2]
                                          : axis.values[1] - axis.values[0];
                next = at_hi ? axis.hi() + step : axis.lo() - step;
                if (zero_floor && next < 0.0) next = 0.0;
            }
            if (next == (at_hi ? axis.hi() : axis.lo())) return;  // clamped to an existing edge
            axis.values.insert(at_hi ? axis.values.end() : axis.values.begin(), next);
            ++axis.extensions;
            extended = true;
        };

        extend(c_axis, best.c, true, false);
        extend(eps_axis, best.epsilon, false, true);
        if (radial) extend(gamma_axis, best.gamma, true, false);
        if (!extended) break;
    }

    GridSearchResult res;
    res.best.family = family;
    res.best.c = best.c;
    res.best.epsilon = best.epsilon;
    res.best.gamma = radial ? best.gamma : 0.0;
    res.best_stats = best.stats;
    res.extensions = c_axis.extensions + eps_axis.extensions + gamma_axis.extensions;
    if (c_axis.capped) res.capped_axes.push_back("c");
    if (eps_axis.capped) res.capped_axes.push_back("epsilon");
    if (radial && gamma_axis.capped) res.capped_axes.push_back("gamma");
    for (const auto& [key, stats] : cache)
        res.table.push_back({key[0], key[1], key[2], stats});
    return res;
}

}  // namespace addopt
