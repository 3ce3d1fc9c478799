#pragma once

#include "dpdwald/glm.hpp"
#include "dpdwald/types.hpp"
#include "dpdwald/wald.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace dpdwald {

enum class McScenario {
  null_hypothesis,     // data from theta0
  fixed_alternative,   // data from theta_star
  contiguous,          // data from theta0 + d / sqrt(n)
  contaminated_level,  // theta0, each y_i replaced by a contamination point w.p. eps / sqrt(n)
  contaminated_power,  // contiguous alternative plus the same contamination
};

std::string to_string(McScenario s);
McScenario parse_scenario(const std::string& name);

struct McConfig {
  int replications = 1000;
  int n = 200;
  std::uint64_t seed = 1;
  std::vector<double> tau_grid{0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
  McScenario scenario = McScenario::null_hypothesis;
  double alpha = 0.05;
  Vector theta_star;  // fixed alternative, full parameter
  Vector d;           // contiguous direction, full parameter
  double epsilon = 0.0;
  double contamination_point = 0.0;
  // Optional generator for the contamination point of observation i; overrides contamination_point.
  std::function<double(std::size_t, std::mt19937_64&)> point_generator;
  unsigned threads = 0;  // replications run in parallel; 0: worker_threads()
};

struct McRow {
  double tau = 0.0;
  int valid = 0;
  int excluded = 0;
  int rejections = 0;
  double rate = 0.0;
  double se = 0.0;  // sqrt(rate (1 - rate) / valid)
  double mean_statistic = 0.0;
};

struct McReport {
  McConfig config;
  std::string family;
  std::string design;
  std::vector<McRow> rows;
};

/// Seed of replication r: the r-th output of a SplitMix64 stream started at
/// `seed`. Each replication then draws from its own mt19937_64.
std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r);

/// Generating parameter of the scenario (before contamination).
Vector scenario_theta(const McConfig& config, const Vector& theta0);

/// Rejection rates of the Wald test of L beta = l0 over the tau grid.
/// Replications whose estimator fails are excluded and counted per tau.
McReport run_mc(const McConfig& config, const GlmModel& model, const Vector& theta0, const LinearHypothesis& hyp);

void write_mc_csv(std::ostream& out, const McReport& report);

}  // namespace dpdwald
