#pragma once

// Data-driven model selection. Starting from the base specification (all
// conversion factors and drifts constant), residual tests decide whether to
// free the conversion factors (A), add a stochastic drift to renewables (B)
// or to energy productivity (C), and whether to add dummies for spikes (D).

#include "e3s2/diagnostics.hpp"
#include "e3s2/estimation.hpp"
#include "e3s2/json_io.hpp"

#include <optional>
#include <string>
#include <vector>

namespace e3s2 {

enum class RejectRule { Any, All };

struct SelectionThresholds {
  std::vector<int> lags{1, 5};
  std::vector<double> levels{0.01, 0.05};
  RejectRule rule = RejectRule::Any;
  /// A smoothed path is "almost constant" when max - min < factor * mean smoothed SD.
  double flatness_factor = 2.0;
  int max_dummies_per_observable = 6;
  int max_factor_rounds = 3;
};

struct SelectionConfig {
  SelectionThresholds thresholds;
  OptimizerConfig optimizer = [] {
    OptimizerConfig c;
    c.compute_stderr = false;
    return c;
  }();
  /// Starting values for the base fit; default_initial_guess when empty.
  std::optional<ParameterVector> init_guess;
};

struct TraceEntry {
  std::string step;  // "0", "A", "B", "C", "D"
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  std::string decision;
  std::string spec_delta;
};

struct SelectionTrace {
  std::vector<TraceEntry> entries;
  ModelSpec final_spec;
  ParameterVector final_params;
  double final_loglik = 0.0;
  bool failed = false;
  std::string failure;

  Json to_json() const;
  std::string to_text() const;
};

/// True when the p-values of a test reject under the thresholds' rule.
bool rejects(const std::vector<double>& p_values, const SelectionThresholds& th);

/// Runs the flowchart on one dataset. Deterministic given inputs.
SelectionTrace select_model(const EnergySeries& energy, const ObservationSeries& obs,
                            const SelectionConfig& config = {});

}  // namespace e3s2
