#pragma once

#include <string>

#include "addopt/model.hpp"
#include "addopt/optimize.hpp"

namespace addopt {

// Shortest round-tripping decimal form; the one formatting used everywhere
// numbers are written out.
std::string format_double(double v);

// Site CSV schema (header required):
//   id,lat,lon,status,base_sales,addon_sales,income,population
// status in {active, candidate} case-insensitive; sales fields may be empty.
Network load_sites(const std::string& path, DistanceMetric metric = DistanceMetric::Haversine);
Network parse_sites_csv(const std::string& text, DistanceMetric metric,
                        const std::string& context);

// Canonical form: loading the output reproduces the network byte-for-byte.
std::string sites_to_csv(const Network& net);
void save_sites(const Network& net, const std::string& path);

// JSON model file carrying coefficients, duals, support vectors,
// standardizer, hyperparameters and the feature spec; doubles round-trip
// bit-exactly.
std::string model_to_json(const DemandModel& m);
DemandModel model_from_json(const std::string& text);
void save_model(const DemandModel& m, const std::string& path);
DemandModel load_model(const std::string& path);

// Map in the style of the expansion figures: active sites as squares,
// candidates as circles sized by base sales, chosen candidates filled.
std::string map_svg(const Network& net, const ExpansionSolution& solution);
void emit_map_svg(const Network& net, const ExpansionSolution& solution,
                  const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace addopt
