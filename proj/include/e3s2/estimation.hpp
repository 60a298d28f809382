#pragma once

// Maximum-likelihood estimation of the free parameters of a ModelSpec.
//
// The optimizer works on scaled coordinates u_i = theta_i / scale_i. Variances
// pass through a hinge, sigma^2 = max(0, u * scale), so the zero boundary is
// reachable and small variances can "pile up" at exactly zero.

#include "e3s2/filter.hpp"
#include "e3s2/nelder_mead.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace e3s2 {

struct OptimizerConfig {
  NelderMeadConfig nelder_mead;
  /// Additional starting points; the best optimum over all starts is kept.
  std::vector<ParameterVector> extra_starts;
  /// Names of free parameters held at their init_guess value.
  std::vector<std::string> fixed;
  InitSpec init;
  bool compute_stderr = true;
  /// Relative initial simplex step for level parameters and for variances.
  double level_step = 0.1;
  double variance_step = 0.5;
};

struct CovarianceEstimate {
  std::vector<double> stderr;  // NaN for parameters excluded from the Hessian
  Eigen::MatrixXd cov;         // over all free parameters; zero rows for excluded ones
  std::vector<bool> at_boundary;
  bool pseudo_inverse = false;  // near-singular directions were dropped
  bool clipped = false;         // negative curvature was clipped
  std::vector<std::string> warnings;
};

struct FitResult {
  ModelSpec spec;
  std::vector<FreeParameter> free;
  ParameterVector params;
  CovarianceEstimate covariance;
  double loglik = 0.0;
  double initial_loglik = 0.0;
  bool converged = false;
  int n_iter = 0;
  int n_eval = 0;
  FilterOutput filter;

  /// Index of a free parameter by name, or -1.
  int index_of(const std::string& name) const;
};

/// Marland factors, average steps of the productivity and renewables series
/// for drifts and growth rates, phi = 0.5, zero dummies, and 10% of the
/// sample variance of the relevant first differences for noise variances.
ParameterVector default_initial_guess(const ModelSpec& spec, const EnergySeries& energy,
                                      const ObservationSeries& obs);

FitResult fit_mle(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs,
                  const ParameterVector& init_guess, const OptimizerConfig& config = {});

/// Central finite-difference Hessian of f at theta.
Eigen::MatrixXd numerical_hessian(const std::function<double(std::span<const double>)>& f,
                                  const std::vector<double>& theta, const std::vector<double>& steps);

/// Inverse of a Hessian of -loglik. Eigenvalues below 1e-10 (absolute, or
/// relative to the largest) are dropped (pseudo-inverse); negative ones are
/// additionally reported as clipped.
CovarianceEstimate covariance_from_hessian(const Eigen::MatrixXd& hessian);

/// Standard errors from the numerical Hessian of -loglik at `params_hat`.
/// Steps are 1e-4 * max(1, |theta|), shortened for variances so that the
/// stencil stays nonnegative; variances estimated at exactly zero sit on the
/// boundary and are excluded.
CovarianceEstimate stderr_hessian(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs,
                                  const ParameterVector& params_hat, const InitSpec& init = {},
                                  const std::vector<std::string>& fixed = {});

/// Free parameters of `spec` minus the named fixed ones.
std::vector<FreeParameter> optimized_parameters(const ModelSpec& spec, const std::vector<std::string>& fixed);

}  // namespace e3s2
