#pragma once

// Extended Kalman filter, fixed-interval smoother, and forward simulator for
// the E3S2 state-space model.

#include "e3s2/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace e3s2 {

/// Emission conversion factors from Marland & Rotty, tonne CO2e per toe.
inline constexpr double kMarlandCoal = 2.6841;
inline constexpr double kMarlandOil = 2.8590;
inline constexpr double kMarlandGas = 2.0560;

inline constexpr double kDefaultBigK = 1e6;

struct InitSpec {
  double big_k = kDefaultBigK;
  std::map<State, double> mean_override;
  std::map<State, double> variance_override;
  /// Number of leading time steps excluded from the log-likelihood. Defaults
  /// to the number of diffusely initialized states.
  std::optional<int> burn_in;
};

struct InitialState {
  Vec mean;
  Mat cov;
  /// Diffuse states that feed back into the recursion. E* and Y* do not
  /// depend on their own lag and are not counted.
  int diffuse_count = 0;
  int burn_in = 0;
};

/// Initial mean and covariance of x_0. Diffuse states get variance `big_k`
/// and a first-observation mean; parameter-valued states get the parameter
/// value and zero variance; alpha* starts at its stationary distribution.
InitialState init_state(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                        const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init = {});

/// Overwrites the parameter-valued states of `x` (constant factors and fixed
/// drifts) with their values in `params`.
void apply_parameter_states(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                            Vec& x);

struct FilterOutput {
  std::vector<int> years;
  std::vector<Observable> observables;
  Vec initial_mean;
  Mat initial_cov;
  std::vector<Vec> predicted_mean;  // x_{t|t-1}
  std::vector<Mat> predicted_cov;   // P_{t|t-1}
  std::vector<Vec> filtered_mean;   // x_{t|t}
  std::vector<Mat> filtered_cov;    // P_{t|t}
  std::vector<ObsVec> innovation;
  std::vector<ObsMat> innovation_cov;
  /// v_t / sqrt(diag F_t); NaN where the diagonal entry is not positive.
  std::vector<ObsVec> standardized;
  /// Jacobian used to predict step t from the filtered state at t-1.
  std::vector<Mat> jacobian;
  ObsStateMat measurement_jacobian;
  int burn_in = 0;
  double loglik = 0.0;

  std::size_t size() const { return years.size(); }
  int observable_index(Observable o) const;
  /// Standardized innovations of one observable, after the burn-in by default.
  std::vector<double> standardized_series(Observable o, bool post_burn_in = true) const;
};

struct SmootherOutput {
  std::vector<int> years;
  std::vector<Vec> mean;  // x_{t|n}
  std::vector<Mat> cov;   // P_{t|n}
};

/// Throws DataError on misaligned inputs, NumericalError (with the time index)
/// when the innovation covariance is singular or the likelihood is not finite.
FilterOutput ekf_filter(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                        const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init = {});

/// Log-likelihood only; returns -infinity instead of throwing on numerical
/// failure. Bit-identical to `ekf_filter(...).loglik`.
double log_likelihood(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                      const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init = {});

/// Fixed-interval smoother over the filter's linearization (backward
/// state-smoothing recursion, no inversion of P_{t|t-1}).
SmootherOutput ekf_smoother(const FilterOutput& filtered);

/// Throws DataError unless energy and observations cover the same years and
/// all observables used by `spec` are finite.
void check_alignment(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs);

struct SimulationResult {
  ObservationSeries observations;
  std::vector<Vec> states;  // true x_t, t = 1..n
};

/// Draws x_t = T(x_{t-1}) + R(x_{t-1}) eta, y_t = Z(x_t) + eps with Gaussian
/// disturbances from a generator seeded by `seed`. Parameter-valued states in
/// `x0` are replaced by their parameter values. A non-empty `state_drift` is
/// added to the state every period (used to inject deterministic trends).
SimulationResult simulate(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                          const EnergySeries& energy, const Vec& x0, std::uint64_t seed,
                          const Vec& state_drift = Vec());

namespace kalman {

/// P <- (P + P') / 2.
template <typename M>
void symmetrize(M& P) {
  P = (0.5 * (P + P.transpose())).eval();
}

struct Update {
  Vec mean;
  Mat cov;
  ObsVec innovation;
  ObsMat innovation_cov;
  double loglik = 0.0;  // log density of the innovation
};

/// Joseph-form measurement update. Returns false when F is not positive
/// definite.
bool update(const Vec& x_pred, const Mat& P_pred, const ObsVec& y, const ObsVec& y_pred, const ObsStateMat& Z,
            const ObsMat& H, Update& out);

}  // namespace kalman

}  // namespace e3s2
