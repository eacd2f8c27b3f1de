#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "addopt/optimize.hpp"

namespace addopt {

struct SimConfig {
    std::vector<int> s_values = {2, 4, 6};  // sigma = 4^s
    int draws_per_sigma = 10;
    int k_max = 20;
    std::uint64_t seed = 0;
};

// Candidate base sales: i.i.d. normal(mu, sigma) floored at the minimum
// active-site base sales. One value per candidate, candidate_indices() order.
Vector simulate_candidate_demand(const Network& net, double mu, double sigma,
                                 std::uint64_t seed);

// Mean active-site base sales (the simulation mu).
double active_mean_base_sales(const Network& net);

struct GainRecord {
    std::string region;
    int s = 0;
    int draw = 0;
    int k = 0;
    double z0 = 0.0;  // predicted total with no expansion
    double zb = 0.0;  // baseline expansion
    double ze = 0.0;  // optimized expansion
    double gain = 0.0;  // (ze - zb) / (zb - z0) * 100
    bool degenerate = false;  // zb == z0, gain undefined
    std::vector<int> chosen_eo;  // candidate network indices
    std::vector<int> chosen_bm;
};

struct SweepCell {
    double mean_gain = 0.0;
    int draws_used = 0;
    int degenerate = 0;
};

struct SweepResult {
    std::vector<GainRecord> records;             // ordered by (s, draw, k)
    std::map<std::pair<int, int>, SweepCell> table;  // (s, k) -> cell
};

// The full simulation protocol: per (s, draw) simulate candidate demand, then
// for every K run the baseline and the solver matching the model form, and
// record the gain. Deterministic in (network, model, config).
SweepResult run_gain_sweep(const Network& net, const DemandModel& pstar, const SimConfig& cfg,
                           const std::string& region_label, const ExactOptions& opts = {});

// Re-evaluates the sweep's fixed expansion decisions under another model:
// z0, zb, ze are recomputed with `alt` on the same simulated demand draws.
SweepResult robustness_check(const Network& net, const SweepResult& sweep,
                             const DemandModel& alt, const SimConfig& cfg);

// The simulated network for one (s, draw) cell; shared by sweep and
// robustness so both see identical demand.
Network simulated_network(const Network& net, const SimConfig& cfg, int s, int draw);

}  // namespace addopt
