#pragma once

// Scenario-conditional projections with parameter and sampling uncertainty,
// and trends implied by scenario GDP.

#include "e3s2/estimation.hpp"
#include "e3s2/json_io.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace e3s2 {

struct ScenarioPathway {
  std::string scenario_id;
  std::vector<int> years;
  std::vector<double> coal, oil, gas, nuclear, renewables;
  std::vector<double> ccs;  // empty when absent
  std::vector<double> gdp;  // empty when absent

  std::size_t size() const { return years.size(); }
  ExogInput at(std::size_t i) const { return {years[i], coal[i], oil[i], gas[i], nuclear[i], renewables[i]}; }
  /// Years strictly increasing (gaps may be irregular), energies finite and
  /// nonnegative, optional columns of matching length.
  void validate() const;
};

/// Columns: year, coal, oil, gas, nuclear, renewables, and optionally ccs, gdp.
ScenarioPathway load_pathway_csv(const std::filesystem::path& path, const std::string& scenario_id = "");

struct ProjectionAnchor {
  Variant variant = Variant::E3S2;
  bool endogenous_R = true;
  int anchor_year = 2019;
  /// (beta_C, beta_O, beta_G, d_beta_Y, d_R) for E3S2 without d_R when
  /// renewables are exogenous; (beta_C, beta_O, beta_G, g) for E3S2-g.
  std::vector<std::string> theta_names;
  Eigen::VectorXd theta;
  Eigen::MatrixXd omega;
  /// log(beta_Y) under E3S2-g.
  double beta_y_mean = 0.0, beta_y_var = 0.0;
  double r_mean = 0.0, r_var = 0.0;
  double var_eta_E = 0.0, var_eta_Y = 0.0, var_eta_beta_Y = 0.0, var_eta_R = 0.0;

  Json to_json() const;
};

/// Anchor from a historical fit. Time-varying factors are frozen at their
/// smoothed value in `anchor_year` with the smoothed variance; stochastic
/// drifts, beta_Y and R* take the median smoothed mean and variance over the
/// `window` years ending at `anchor_year`; everything else comes from the
/// point estimates and their Hessian covariance. Throws DataError when the
/// window is outside the sample.
ProjectionAnchor build_anchor(const FitResult& fit, const SmootherOutput& smooth, int anchor_year = 2019,
                              int window = 5);

struct ProjectionConfig {
  int n_draws = 10000;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool subtract_ccs = true;
  bool diagonal_omega = false;
  bool keep_draws = false;
};

struct Band {
  int year = 0;
  std::string variable;
  double p5 = 0.0, p50 = 0.0, p95 = 0.0;
};

struct ProjectionBands {
  std::string scenario_id;
  int anchor_year = 0;
  int n_draws = 0;
  int n_clamped = 0;  // draws with at least one conversion factor clamped at 0
  bool omega_projected = false;
  std::vector<std::string> warnings;
  std::vector<Band> bands;
  /// Per variable, per pathway year, all draws (only with keep_draws).
  std::map<std::string, std::vector<std::vector<double>>> draws;
  Json anchor;

  const Band& at(const std::string& variable, int year) const;
  void write_csv(std::ostream& os) const;
  Json to_json() const;
};

/// Percentile by linear interpolation of order statistics, Hazen positions
/// (i - 0.5) / n. `sorted` must be ascending.
double hazen_percentile(const std::vector<double>& sorted, double p);

/// Forward simulation over the pathway. Each pathway step of gap D years
/// accumulates D years of drift and disturbance variance; E* and Y* of the
/// pathway year see the states of the preceding year. Emissions bands are
/// net of CCS when configured; CCS is subtracted from the percentiles so the
/// shift is exact.
ProjectionBands project(const ProjectionAnchor& anchor, const ScenarioPathway& pathway,
                        const ProjectionConfig& config = {});

/// Same as project for an E3S2-g anchor (log-space productivity recursion).
ProjectionBands project_geometric(const ProjectionAnchor& anchor, const ScenarioPathway& pathway,
                                  const ProjectionConfig& config = {});

enum class TrendTarget { DR, DBetaY };
std::string_view to_string(TrendTarget t);

struct ImpliedTrendInput {
  int base_year = 2019;
  /// beta_Y in base_year and its historical drift; the drift is only used
  /// when the target is d_R.
  double beta_y0 = 0.0;
  double d_beta_y = 0.0;
  /// Variance of GDP around the trend model; must be positive.
  double noise_var = 1.0;
  double big_k = kDefaultBigK;
};

struct ImpliedTrendResult {
  TrendTarget target = TrendTarget::DBetaY;
  double estimate = 0.0;
  double stderr = 0.0;
  double loglik = 0.0;
};

/// ML estimate of one linear trend from scenario GDP. For d_beta_Y the latent
/// productivity z follows z_k = z_{k-1} + d * gap_k and GDP_k = z_k * total
/// energy_k. For d_R the latent renewables follow the same trend and
/// GDP_k = s_k * (fossil_k + nuclear_k + z_k) with the known productivity path
/// s_k = beta_y0 + d_beta_y * (year_k - base_year). Throws DataError when the
/// trend is not identified.
ImpliedTrendResult implied_trend(const ScenarioPathway& pathway, const ImpliedTrendInput& input, TrendTarget target);

/// Multiplicative rescale so that the value in `anchor_year` equals `anchor_value`.
std::vector<double> harmonize_series(const std::vector<int>& years, const std::vector<double>& values,
                                     int anchor_year, double anchor_value);

}  // namespace e3s2
