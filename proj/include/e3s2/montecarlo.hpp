#pragma once

// Parameter-recovery study: simulate from known parameters, refit, and
// collect estimate-minus-truth across runs.

#include "e3s2/estimation.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace e3s2 {

struct MonteCarloConfig {
  int n_runs = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
  /// Start each fit at the true parameters; otherwise at default_initial_guess.
  bool start_at_truth = true;
  OptimizerConfig optimizer = [] {
    OptimizerConfig c;
    c.compute_stderr = false;
    return c;
  }();
};

struct ParameterSummary {
  std::string name;
  bool variance = false;
  double truth = 0.0;
  std::vector<double> diff;  // estimate - truth per run; NaN for failed runs
  double median = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  /// Standard error of the median, 1.2533 * sd / sqrt(n).
  double median_se = 0.0;
  /// Fraction of successful runs with the variance estimated at exactly zero.
  double pileup = 0.0;
};

struct MonteCarloReport {
  int n_runs = 0;
  int n_failed = 0;
  std::vector<int> failed_runs;
  std::vector<std::string> failure_messages;
  std::vector<bool> converged;
  std::vector<ParameterSummary> params;

  const ParameterSummary& at(const std::string& name) const;
  void write_csv(std::ostream& os) const;
  std::string summary_json() const;
};

/// Seed of run `run` derived from the study seed; runs are independent streams.
std::uint64_t run_seed(std::uint64_t seed, int run);

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written per index.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

/// Simulate-and-fit loop. `x0` is the true initial state of the simulator.
MonteCarloReport monte_carlo_study(const ModelSpec& spec, const ParameterVector& truth, const EnergySeries& energy,
                                   const Vec& x0, const MonteCarloConfig& config);

}  // namespace e3s2
