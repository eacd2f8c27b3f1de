#include "addopt/experiment.hpp"

#include <algorithm>
#include <climits>
#include <cmath>

#include "addopt/errors.hpp"
#include "addopt/rng.hpp"

namespace addopt {

double active_mean_base_sales(const Network& net) {
    const auto& active = net.active_indices();
    if (active.empty()) throw NoActiveSitesError();
    double sum = 0.0;
    for (int i : active) sum += *net.site(i).base_sales;
    return sum / static_cast<double>(active.size());
}

Vector simulate_candidate_demand(const Network& net, double mu, double sigma,
                                 std::uint64_t seed) {
    const auto& active = net.active_indices();
    if (active.empty()) throw NoActiveSitesError();
    if (sigma < 0.0) throw Error("sigma must be non-negative");
    double floor = *net.site(active.front()).base_sales;
    for (int i : active) floor = std::min(floor, *net.site(i).base_sales);

    Rng rng(seed);
    Vector g(static_cast<Eigen::Index>(net.candidate_indices().size()));
    for (Eigen::Index k = 0; k < g.size(); ++k) {
        const double draw = rng.normal(mu, sigma);
        g(k) = std::max(draw, floor);
    }
    return g;
}

Network simulated_network(const Network& net, const SimConfig& cfg, int s, int draw) {
    const double mu = active_mean_base_sales(net);
    const double sigma = std::pow(4.0, s);
    const std::uint64_t seed = Rng::derive(cfg.seed, "sim", static_cast<std::uint64_t>(s),
                                           static_cast<std::uint64_t>(draw));
    return net.with_candidate_sales(simulate_candidate_demand(net, mu, sigma, seed));
}

namespace {

double percent_gain(double z0, double zb, double ze) {
    return (ze - zb) / (zb - z0) * 100.0;
}

void fill_table(SweepResult& result) {
    for (const GainRecord& r : result.records) {
        SweepCell& cell = result.table[{r.s, r.k}];
        if (r.degenerate) {
            ++cell.degenerate;
        } else {
            cell.mean_gain += r.gain;
            ++cell.draws_used;
        }
    }
    for (auto& [key, cell] : result.table)
        if (cell.draws_used > 0) cell.mean_gain /= cell.draws_used;
}

}  // namespace

SweepResult run_gain_sweep(const Network& net, const DemandModel& pstar, const SimConfig& cfg,
                           const std::string& region_label, const ExactOptions& opts) {
    if (cfg.draws_per_sigma < 1) throw Error("draws_per_sigma must be >= 1");
    for (int s : cfg.s_values)
        if (s < 0) throw Error("sigma exponents must be non-negative");
    const int n_cand = static_cast<int>(net.candidate_indices().size());
    const int k_max = std::min(cfg.k_max, n_cand);  // capped, not an error

    SweepResult result;
    for (int s : cfg.s_values) {
        for (int draw = 0; draw < cfg.draws_per_sigma; ++draw) {
            const Network sim = simulated_network(net, cfg, s, draw);
            ExpansionProblem problem = make_problem(sim, pstar, 1);
            const double z0 = evaluate_selection(problem, {});
            for (int k = 1; k <= k_max; ++k) {
                problem.budget = k;
                const ExpansionSolution bm = solve_baseline(problem);
                const ExpansionSolution eo = solve_auto(problem, opts);

                GainRecord rec;
                rec.region = region_label;
                rec.s = s;
                rec.draw = draw;
                rec.k = k;
                rec.z0 = z0;
                rec.zb = bm.objective_value;
                rec.ze = eo.objective_value;
                rec.chosen_bm = bm.chosen;
                rec.chosen_eo = eo.chosen;
                rec.degenerate = rec.zb == rec.z0;
                rec.gain = rec.degenerate ? 0.0 : percent_gain(rec.z0, rec.zb, rec.ze);
                result.records.push_back(std::move(rec));
            }
        }
    }
    fill_table(result);
    return result;
}

SweepResult robustness_check(const Network& net, const SweepResult& sweep,
                             const DemandModel& alt, const SimConfig& cfg) {
    SweepResult result;
    int cached_s = INT_MIN, cached_draw = INT_MIN;
    Network sim = net;  // replaced on first use
    ExpansionProblem problem;
    double z0 = 0.0;
    for (const GainRecord& src : sweep.records) {
        if (src.s != cached_s || src.draw != cached_draw) {
            sim = simulated_network(net, cfg, src.s, src.draw);
            problem = make_problem(sim, alt, 1);
            z0 = evaluate_selection(problem, {});
            cached_s = src.s;
            cached_draw = src.draw;
        }
        GainRecord rec = src;
        rec.z0 = z0;
        rec.zb = evaluate_selection(problem, src.chosen_bm);
        rec.ze = evaluate_selection(problem, src.chosen_eo);
        rec.degenerate = rec.zb == rec.z0;
        rec.gain = rec.degenerate ? 0.0 : percent_gain(rec.z0, rec.zb, rec.ze);
        result.records.push_back(std::move(rec));
    }
    fill_table(result);
    return result;
}

}  // namespace addopt
