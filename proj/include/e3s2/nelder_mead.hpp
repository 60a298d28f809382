#pragma once

#include <functional>
#include <span>
#include <vector>

namespace e3s2 {

struct NelderMeadConfig {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Converged when max - min of the simplex values falls below this.
  double tolerance = 1e-8;
  int max_iterations = 5000;
  /// Fresh simplices built around the incumbent after convergence.
  int restarts = 3;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
};

/// Minimizes `f` starting from the simplex x0 + step_i e_i. Non-finite
/// function values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const std::vector<double>& steps, const NelderMeadConfig& config = {});

}  // namespace e3s2
