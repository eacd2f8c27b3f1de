#include "addopt/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "addopt/errors.hpp"

namespace addopt {

const char* solver_name(SolverKind k) {
    switch (k) {
        case SolverKind::Baseline: return "baseline";
        case SolverKind::SortTopK: return "sort";
        case SolverKind::ExactQuadratic: return "exact";
        case SolverKind::Greedy: return "greedy";
        case SolverKind::Exhaustive: return "exhaustive";
    }
    return "?";
}

namespace {

void validate(const ExpansionProblem& p) {
    if (!p.network) throw Error("expansion problem has no network");
    if (p.candidates.empty()) throw Error("expansion problem has no candidates");
    if (p.budget < 1 || p.budget > static_cast<int>(p.candidates.size()))
        throw Error("budget K must satisfy 1 <= K <= |candidates|");
}

// members = fixed u chosen, sorted by network index so every solver reports
// through one summation order
std::vector<int> selection_members(const ExpansionProblem& p, const std::vector<int>& chosen) {
    std::vector<int> members = p.fixed;
    members.insert(members.end(), chosen.begin(), chosen.end());
    std::sort(members.begin(), members.end());
    return members;
}

std::vector<int> sorted_by_id(const Network& net, std::vector<int> idx) {
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return net.site(a).id < net.site(b).id; });
    return idx;
}

double binomial_count(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c *= static_cast<double>(n - k + i) / i;
    return c;
}

}  // namespace

double evaluate_selection(const ExpansionProblem& problem, const std::vector<int>& chosen) {
    const std::vector<int> members = selection_members(problem, chosen);
    if (const auto* lin = std::get_if<LinearCoeffs>(&problem.objective)) {
        double v = 0.0;
        for (int i : members) v += lin->l(i);
        return v;
    }
    if (const auto* quad = std::get_if<QuadraticCoeffs>(&problem.objective)) {
        double v = 0.0;
        for (int i : members) v += quad->l(i);
        for (int i : members)
            for (int j : members)
                if (i != j) v += quad->e(i, j);
        return v;
    }
    const auto& bb = std::get<BlackBox>(problem.objective);
    return predict_network(*bb.model, *problem.network, members);
}

Vector derive_linear_coeffs(const DemandModel& m, const Network& net) {
    if (m.spec.use_spatial_lag)
        throw SpatialModelNotLinearizableError(
            "model carries a spatial-lag feature; use the quadratic extraction");
    if (!m.is_affine())
        throw SpatialModelNotLinearizableError("radial-kernel SVR has no linear coefficients");
    const AffineCoefficients aff = affine_coefficients(m);  // order (g, h, p)
    Vector l(net.size());
    for (int i = 0; i < net.size(); ++i) {
        const Site& s = net.site(i);
        if (!s.base_sales) throw MissingFieldError(s.id, "base_sales");
        l(i) = aff.intercept + aff.slopes(0) * *s.base_sales + aff.slopes(1) * s.income +
               aff.slopes(2) * s.population;
    }
    return l;
}

std::pair<Vector, Matrix> derive_quadratic_coeffs(const DemandModel& m, const Network& net) {
    if (!m.is_affine())
        throw NotAffineInFeaturesError("radial-kernel SVR is not affine in its features");
    if (!m.spec.use_spatial_lag)
        throw NotAffineInFeaturesError(
            "model has no spatial-lag feature; use the linear extraction");
    const AffineCoefficients aff = affine_coefficients(m);  // order (g, wg, h, p)
    const double beta_wg = aff.slopes(1);

    Vector l(net.size());
    Matrix e = Matrix::Zero(net.size(), net.size());
    for (int i = 0; i < net.size(); ++i) {
        const Site& s = net.site(i);
        if (!s.base_sales) throw MissingFieldError(s.id, "base_sales");
        l(i) = aff.intercept + aff.slopes(0) * *s.base_sales + aff.slopes(2) * s.income +
               aff.slopes(3) * s.population;
    }
    for (int i = 0; i < net.size(); ++i)
        for (int j = 0; j < net.size(); ++j) {
            if (i == j) continue;
            e(i, j) = beta_wg * *net.site(j).base_sales / net.D()(i, j);
        }
    return {std::move(l), std::move(e)};
}

ExpansionSolution solve_sort_topk(const ExpansionProblem& problem) {
    validate(problem);
    const auto* lin = std::get_if<LinearCoeffs>(&problem.objective);
    if (!lin) throw Error("sort solver needs a linear-coefficient objective");

    std::vector<int> order = sorted_by_id(*problem.network, problem.candidates);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return lin->l(a) > lin->l(b); });
    std::vector<int> chosen(order.begin(), order.begin() + problem.budget);

    ExpansionSolution sol;
    sol.chosen = sorted_by_id(*problem.network, chosen);
    sol.objective_value = evaluate_selection(problem, sol.chosen);
    sol.solver = SolverKind::SortTopK;
    sol.optimal = true;
    return sol;
}

namespace {

// Shared state for the exact search over candidates (id order). Candidates
// are decided in index order, so the undecided set is always a suffix.
struct ExactSearch {
    const ExpansionProblem& problem;
    std::vector<int> cand;        // network indices, id order
    Vector fixed_gain;            // l_c + sum_{t in S} (e_tc + e_ct)
    Matrix pair;                  // pair(a, b) = e_ab + e_ba over candidate positions
    double base = 0.0;            // objective of S alone
    int budget = 0;
    bool use_bound = true;
    std::chrono::steady_clock::time_point deadline;
    bool timed_out = false;
    long nodes = 0;

    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<int> best_set;    // candidate positions
    std::vector<int> current;

    ExactSearch(const ExpansionProblem& p, const ExactOptions& opts)
        : problem(p), deadline(std::chrono::steady_clock::now() +
                               std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                   std::chrono::duration<double>(opts.time_limit_seconds))) {
        const auto& quad = std::get<QuadraticCoeffs>(p.objective);
        cand = sorted_by_id(*p.network, p.candidates);
        budget = p.budget;

        base = 0.0;
        for (int i : p.fixed) base += quad.l(i);
        for (int i : p.fixed)
            for (int j : p.fixed)
                if (i != j) base += quad.e(i, j);

        const int m = static_cast<int>(cand.size());
        fixed_gain.resize(m);
        for (int a = 0; a < m; ++a) {
            double v = quad.l(cand[static_cast<std::size_t>(a)]);
            for (int t : p.fixed)
                v += quad.e(t, cand[static_cast<std::size_t>(a)]) +
                     quad.e(cand[static_cast<std::size_t>(a)], t);
            fixed_gain(a) = v;
        }
        pair.resize(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                pair(a, b) = a == b ? 0.0
                                    : quad.e(cand[static_cast<std::size_t>(a)],
                                             cand[static_cast<std::size_t>(b)]) +
                                          quad.e(cand[static_cast<std::size_t>(b)],
                                                 cand[static_cast<std::size_t>(a)]);
    }

    // Optimistic value of completing `current` (value v, next undecided p)
    // with r more picks: each undecided slot takes the largest remaining
    // optimistic marginal; pairwise terms between undecided picks enter by
    // their positive part, halved per endpoint.
    double bound(double v, int p, int r) const {
        const int m = static_cast<int>(cand.size());
        std::vector<double> mu;
        mu.reserve(static_cast<std::size_t>(m - p));
        std::vector<double> pos;
        for (int j = p; j < m; ++j) {
            double val = fixed_gain(j);
            for (int t : current) val += pair(t, j);
            if (r > 1) {
                pos.clear();
                for (int j2 = p; j2 < m; ++j2) {
                    if (j2 == j) continue;
                    const double w = pair(j, j2);
                    if (w > 0.0) pos.push_back(w);
                }
                const int take = std::min<int>(r - 1, static_cast<int>(pos.size()));
                std::partial_sort(pos.begin(), pos.begin() + take, pos.end(),
                                  std::greater<double>());
                for (int t = 0; t < take; ++t) val += 0.5 * pos[static_cast<std::size_t>(t)];
            }
            mu.push_back(val);
        }
        std::partial_sort(mu.begin(), mu.begin() + r, mu.end(), std::greater<double>());
        double b = v;
        for (int t = 0; t < r; ++t) b += mu[static_cast<std::size_t>(t)];
        return b;
    }

    void dfs(int p, int r, double v) {
        if (timed_out) return;
        if (++nodes % 4096 == 0 && std::chrono::steady_clock::now() > deadline) {
            timed_out = true;
            return;
        }
        if (r == 0) {
            if (v > best_value) {
                best_value = v;
                best_set = current;
            }
            return;
        }
        const int m = static_cast<int>(cand.size());
        if (m - p < r) return;
        if (use_bound && bound(v, p, r) <= best_value) return;

        // include candidate p first: lexicographically earlier sets are seen
        // first, so the incumbent on ties is the id-ascending one
        double dv = fixed_gain(p);
        for (int t : current) dv += pair(t, p);
        current.push_back(p);
        dfs(p + 1, r - 1, v + dv);
        current.pop_back();
        dfs(p + 1, r, v);
    }
};

}  // namespace

ExpansionSolution solve_exact_quadratic(const ExpansionProblem& problem,
                                        const ExactOptions& opts) {
    validate(problem);
    if (!std::holds_alternative<QuadraticCoeffs>(problem.objective))
        throw Error("exact solver needs a quadratic-coefficient objective");

    ExactSearch search(problem, opts);
    const double combos =
        binomial_count(static_cast<int>(problem.candidates.size()), problem.budget);
    const bool exhaustive = combos <= opts.exhaustive_threshold;
    search.use_bound = !exhaustive;

    if (!exhaustive) {
        // warm start: the incumbent never falls below the greedy solution, so
        // a time-limited run still dominates the heuristic. The value is
        // nudged down so equal-quality sets found by the search replace it.
        const ExpansionSolution greedy = solve_greedy(problem);
        std::vector<int> positions;
        for (int idx : greedy.chosen) {
            const auto it = std::find(search.cand.begin(), search.cand.end(), idx);
            positions.push_back(static_cast<int>(it - search.cand.begin()));
        }
        std::sort(positions.begin(), positions.end());
        search.best_set = std::move(positions);
        search.best_value = greedy.objective_value -
                            1e-9 * std::max(1.0, std::abs(greedy.objective_value));
    }

    search.dfs(0, problem.budget, search.base);

    std::vector<int> chosen;
    chosen.reserve(search.best_set.size());
    for (int pos : search.best_set) chosen.push_back(search.cand[static_cast<std::size_t>(pos)]);

    ExpansionSolution sol;
    sol.chosen = sorted_by_id(*problem.network, chosen);
    sol.objective_value = evaluate_selection(problem, sol.chosen);
    sol.solver = exhaustive ? SolverKind::Exhaustive : SolverKind::ExactQuadratic;
    sol.optimal = !search.timed_out;
    return sol;
}

ExpansionSolution solve_greedy(const ExpansionProblem& problem) {
    validate(problem);
    const Network& net = *problem.network;
    const std::vector<int> order = sorted_by_id(net, problem.candidates);

    std::vector<int> chosen;
    std::vector<bool> taken(order.size(), false);

    const auto* lin = std::get_if<LinearCoeffs>(&problem.objective);
    const auto* quad = std::get_if<QuadraticCoeffs>(&problem.objective);

    for (int round = 0; round < problem.budget; ++round) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_pos = order.size();
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            if (taken[pos]) continue;
            const int c = order[pos];
            double value;
            if (lin) {
                value = lin->l(c);
            } else if (quad) {
                value = quad->l(c);
                for (int t : problem.fixed) value += quad->e(t, c) + quad->e(c, t);
                for (int t : chosen) value += quad->e(t, c) + quad->e(c, t);
            } else {
                std::vector<int> trial = chosen;
                trial.push_back(c);
                value = evaluate_selection(problem, trial);
            }
            if (value > best) {  // strict: ties keep the earlier (smaller) id
                best = value;
                best_pos = pos;
            }
        }
        taken[best_pos] = true;
        chosen.push_back(order[best_pos]);
    }

    ExpansionSolution sol;
    sol.chosen = sorted_by_id(net, chosen);
    sol.objective_value = evaluate_selection(problem, sol.chosen);
    sol.solver = SolverKind::Greedy;
    sol.optimal = problem.budget == 1;  // one round maximizes the true objective
    return sol;
}

ExpansionSolution solve_baseline(const ExpansionProblem& problem) {
    validate(problem);
    const Network& net = *problem.network;
    for (int c : problem.candidates)
        if (!net.site(c).base_sales) throw MissingSalesError(net.site(c).id);

    std::vector<int> order = sorted_by_id(net, problem.candidates);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return *net.site(a).base_sales > *net.site(b).base_sales;
    });
    std::vector<int> chosen(order.begin(), order.begin() + problem.budget);

    ExpansionSolution sol;
    sol.chosen = sorted_by_id(net, chosen);
    sol.objective_value = evaluate_selection(problem, sol.chosen);
    sol.solver = SolverKind::Baseline;
    sol.optimal = false;
    return sol;
}

ExpansionProblem make_problem(const Network& net, const DemandModel& m, int budget) {
    ExpansionProblem p;
    p.network = &net;
    p.fixed = net.active_indices();
    p.candidates = net.candidate_indices();
    p.budget = budget;
    if (m.is_affine()) {
        if (m.spec.use_spatial_lag) {
            auto [l, e] = derive_quadratic_coeffs(m, net);
            p.objective = QuadraticCoeffs{std::move(l), std::move(e)};
        } else {
            p.objective = LinearCoeffs{derive_linear_coeffs(m, net)};
        }
    } else {
        p.objective = BlackBox{&m};
    }
    return p;
}

ExpansionSolution solve_auto(const ExpansionProblem& problem, const ExactOptions& opts) {
    if (std::holds_alternative<LinearCoeffs>(problem.objective)) return solve_sort_topk(problem);
    if (std::holds_alternative<QuadraticCoeffs>(problem.objective))
        return solve_exact_quadratic(problem, opts);
    return solve_greedy(problem);
}

}  // namespace addopt
