#include "e3s2/filter.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace e3s2 {

namespace {

double energy_total(const EnergySeries& energy, std::size_t t) {
  return energy.coal[t] + energy.oil[t] + energy.gas[t] + energy.nuclear[t] + energy.renewables[t];
}

double mean_step(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  return (v.back() - v.front()) / static_cast<double>(v.size() - 1);
}

ObsVec observation_at(const std::vector<Observable>& obs_kinds, const ObservationSeries& obs, std::size_t t) {
  ObsVec y(static_cast<int>(obs_kinds.size()));
  for (std::size_t i = 0; i < obs_kinds.size(); ++i) y[static_cast<int>(i)] = obs.series(obs_kinds[i])[t];
  return y;
}

template <bool Store>
double run_filter(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                  const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init,
                  FilterOutput* out) {
  const auto obs_kinds = observables(spec);
  const InitialState x0 = init_state(spec, layout, params, energy, obs, init);
  const NoiseCovariances noise = noise_covariances(spec, layout, params);
  const ObsStateMat Z = measurement_jacobian(spec, layout);
  const std::size_t n = energy.size();

  if constexpr (Store) {
    out->years = energy.years;
    out->observables = obs_kinds;
    out->initial_mean = x0.mean;
    out->initial_cov = x0.cov;
    out->measurement_jacobian = Z;
    out->burn_in = x0.burn_in;
    out->predicted_mean.reserve(n);
    out->predicted_cov.reserve(n);
    out->filtered_mean.reserve(n);
    out->filtered_cov.reserve(n);
    out->innovation.reserve(n);
    out->innovation_cov.reserve(n);
    out->standardized.reserve(n);
    out->jacobian.reserve(n);
  }

  Vec x = x0.mean;
  Mat P = x0.cov;
  double loglik = 0.0;
  kalman::Update upd;
  for (std::size_t t = 0; t < n; ++t) {
    const int ti = static_cast<int>(t);
    const ExogInput u = energy.at(t);
    const Mat J = transition_jacobian(spec, layout, params, x, u);
    const Mat L = disturbance_loading(spec, layout, x, u);
    const Vec x_pred = transition(spec, layout, params, x, u);
    Mat P_pred = J * P * J.transpose() + L * noise.state * L.transpose();
    kalman::symmetrize(P_pred);

    const ObsVec y = observation_at(obs_kinds, obs, t);
    const ObsVec y_pred = measurement(spec, layout, params, x_pred, energy.years[t]);
    if (!kalman::update(x_pred, P_pred, y, y_pred, Z, noise.measurement, upd)) {
      throw NumericalError("innovation covariance not positive definite in year " +
                               std::to_string(energy.years[t]),
                           ti);
    }
    if (ti >= x0.burn_in) loglik += upd.loglik;
    if (!std::isfinite(loglik) || !upd.mean.allFinite()) {
      throw NumericalError("filter diverged in year " + std::to_string(energy.years[t]), ti);
    }
    x = upd.mean;
    P = upd.cov;

    if constexpr (Store) {
      out->jacobian.push_back(J);
      out->predicted_mean.push_back(x_pred);
      out->predicted_cov.push_back(P_pred);
      out->filtered_mean.push_back(x);
      out->filtered_cov.push_back(P);
      out->innovation.push_back(upd.innovation);
      out->innovation_cov.push_back(upd.innovation_cov);
      ObsVec s(upd.innovation.size());
      for (int i = 0; i < s.size(); ++i) {
        const double f = upd.innovation_cov(i, i);
        s[i] = f > 0 ? upd.innovation[i] / std::sqrt(f) : std::numeric_limits<double>::quiet_NaN();
      }
      out->standardized.push_back(s);
    }
  }
  if constexpr (Store) out->loglik = loglik;
  return loglik;
}

}  // namespace

namespace kalman {

bool update(const Vec& x_pred, const Mat& P_pred, const ObsVec& y, const ObsVec& y_pred, const ObsStateMat& Z,
            const ObsMat& H, Update& out) {
  const StateObsMat PZt = P_pred * Z.transpose();
  ObsMat F = Z * PZt + H;
  kalman::symmetrize(F);
  const Eigen::LLT<ObsMat> llt(F);
  if (llt.info() != Eigen::Success) return false;
  const ObsVec v = y - y_pred;
  // K = P Z' F^{-1}
  const StateObsMat K = llt.solve(PZt.transpose()).transpose();
  const int n = static_cast<int>(x_pred.size());
  const Mat IKZ = Mat::Identity(n, n) - K * Z;
  out.mean = x_pred + K * v;
  out.cov = IKZ * P_pred * IKZ.transpose() + K * H * K.transpose();
  symmetrize(out.cov);
  out.innovation = v;
  out.innovation_cov = F;
  const ObsVec Finv_v = llt.solve(v);
  double logdet = 0.0;
  const auto& Lm = llt.matrixLLT();
  for (int i = 0; i < F.rows(); ++i) logdet += 2.0 * std::log(Lm(i, i));
  out.loglik = -0.5 * (static_cast<double>(F.rows()) * std::log(2.0 * std::numbers::pi) + logdet + v.dot(Finv_v));
  return true;
}

}  // namespace kalman

void apply_parameter_states(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                            Vec& x) {
  const bool g = spec.variant == Variant::E3S2_G;
  if (g || !spec.tv_beta_C) x[layout.index(State::BetaC)] = params[Param::BetaC];
  if (g || !spec.tv_beta_O) x[layout.index(State::BetaO)] = params[Param::BetaO];
  if (g || !spec.tv_beta_G) x[layout.index(State::BetaG)] = params[Param::BetaG];
  if (layout.has(State::DR) && !spec.ll_R) x[layout.index(State::DR)] = params[Param::DR];
  if (layout.has(State::DBetaY) && !spec.ll_beta_Y) x[layout.index(State::DBetaY)] = params[Param::DBetaY];
}

InitialState init_state(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                        const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init) {
  const int n = layout.size();
  InitialState s;
  s.mean = Vec::Zero(n);
  s.cov = Mat::Zero(n, n);
  const bool g = spec.variant == Variant::E3S2_G;
  const bool have_data = energy.size() > 0 && obs.size() > 0;
  const double K = init.big_k;

  std::vector<double> productivity;  // Y_t / total energy
  if (have_data && !spec.emissions_only) {
    for (std::size_t t = 0; t < obs.size(); ++t) {
      const double tot = energy_total(energy, t);
      productivity.push_back(tot > 0 ? obs.gdp[t] / tot : 0.0);
    }
  }

  for (int i = 0; i < n; ++i) {
    double m = 0.0, v = 0.0;
    bool counted = false;
    switch (layout.state(i)) {
      case State::E:
        m = have_data ? obs.emissions.front() : 0.0;
        v = K;
        break;
      case State::Y:
        m = have_data ? obs.gdp.front() : 0.0;
        v = K;
        break;
      case State::BetaC:
      case State::BetaO:
      case State::BetaG: {
        const State st = layout.state(i);
        const bool tv = !g && (st == State::BetaC ? spec.tv_beta_C : st == State::BetaO ? spec.tv_beta_O : spec.tv_beta_G);
        if (tv) {
          m = st == State::BetaC ? kMarlandCoal : st == State::BetaO ? kMarlandOil : kMarlandGas;
          v = K;
          counted = true;
        } else {
          m = params[st == State::BetaC ? Param::BetaC : st == State::BetaO ? Param::BetaO : Param::BetaG];
        }
        break;
      }
      case State::BetaY: {
        const double b = productivity.empty() ? 1.0 : productivity.front();
        m = g ? std::log(b > 0 ? b : 1.0) : b;
        v = K;
        counted = true;
        break;
      }
      case State::R:
        m = have_data ? obs.renewables.front() : 0.0;
        v = K;
        counted = true;
        break;
      case State::DR:
        if (spec.ll_R) {
          m = have_data ? mean_step(obs.renewables) : 0.0;
          v = K;
          counted = true;
        } else {
          m = params[Param::DR];
        }
        break;
      case State::DBetaY:
        if (spec.ll_beta_Y) {
          m = mean_step(productivity);
          v = K;
          counted = true;
        } else {
          m = params[Param::DBetaY];
        }
        break;
      case State::Alpha: {
        const double phi = params[Param::Phi];
        const double q = spec.is_pinned(Param::VarEtaAlpha) ? 0.0 : params[Param::VarEtaAlpha];
        v = std::abs(phi) < 1.0 ? q / (1.0 - phi * phi) : K;
        break;
      }
    }
    const State st = layout.state(i);
    if (auto it = init.mean_override.find(st); it != init.mean_override.end()) m = it->second;
    if (auto it = init.variance_override.find(st); it != init.variance_override.end()) {
      v = it->second;
      counted = counted && v == K;
    }
    s.mean[i] = m;
    s.cov(i, i) = v;
    if (counted) ++s.diffuse_count;
  }
  s.burn_in = init.burn_in.value_or(s.diffuse_count);
  return s;
}

int FilterOutput::observable_index(Observable o) const {
  for (std::size_t i = 0; i < observables.size(); ++i) {
    if (observables[i] == o) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> FilterOutput::standardized_series(Observable o, bool post_burn_in) const {
  const int k = observable_index(o);
  std::vector<double> out;
  if (k < 0) return out;
  const std::size_t start = post_burn_in ? static_cast<std::size_t>(std::max(burn_in, 0)) : 0;
  for (std::size_t t = start; t < standardized.size(); ++t) out.push_back(standardized[t][k]);
  return out;
}

void check_alignment(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs) {
  energy.validate();
  if (energy.size() == 0) throw DataError("empty estimation span");
  if (obs.years != energy.years) throw DataError("observation years do not align with energy years");
  for (Observable o : observables(spec)) {
    const auto& s = obs.series(o);
    if (s.size() != obs.years.size()) {
      throw DataError("observation series '" + std::string(to_string(o)) + "' has wrong length");
    }
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (!std::isfinite(s[t])) {
        throw DataError("missing " + std::string(to_string(o)) + " observation in year " +
                        std::to_string(obs.years[t]));
      }
    }
  }
  for (const auto& d : spec.dummies) {
    if (d.year < energy.years.front() || d.year > energy.years.back()) {
      throw DataError("dummy " + d.name() + " outside the estimation span");
    }
  }
}

FilterOutput ekf_filter(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                        const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init) {
  check_alignment(spec, energy, obs);
  validate_params(spec, params);
  FilterOutput out;
  run_filter<true>(spec, layout, params, energy, obs, init, &out);
  return out;
}

double log_likelihood(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                      const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init) {
  try {
    return run_filter<false>(spec, layout, params, energy, obs, init, nullptr);
  } catch (const std::exception&) {
    return -std::numeric_limits<double>::infinity();
  }
}

SmootherOutput ekf_smoother(const FilterOutput& f) {
  const std::size_t n = f.size();
  SmootherOutput s;
  s.years = f.years;
  s.mean.resize(n);
  s.cov.resize(n);
  if (n == 0) return s;
  const int dim = static_cast<int>(f.filtered_mean.front().size());
  const ObsStateMat& Z = f.measurement_jacobian;
  Vec r = Vec::Zero(dim);
  Mat N = Mat::Zero(dim, dim);
  // Smoothed values are formed from the filtered ones,
  //   x_{k|n} = x_{k|k} + P_{k|k} T_{k+1}' r_k,  V_k = P_{k|k} - P_{k|k} T_{k+1}' N_k T_{k+1} P_{k|k},
  // which avoids cancellation against a large diffuse predicted covariance.
  for (std::size_t k = n; k-- > 0;) {
    if (k + 1 == n) {
      s.mean[k] = f.filtered_mean[k];
      s.cov[k] = f.filtered_cov[k];
    } else {
      const Mat M = f.filtered_cov[k] * f.jacobian[k + 1].transpose();
      s.mean[k] = f.filtered_mean[k] + M * r;
      Mat V = f.filtered_cov[k] - M * N * M.transpose();
      kalman::symmetrize(V);
      s.cov[k] = V;
    }
    if (!s.mean[k].allFinite()) throw NumericalError("smoother produced non-finite state", static_cast<int>(k));
    if (k == 0) break;

    const Eigen::LLT<ObsMat> llt(f.innovation_cov[k]);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("smoother: innovation covariance not positive definite", static_cast<int>(k));
    }
    const Mat& P = f.predicted_cov[k];
    const ObsStateMat FinvZ = llt.solve(Z);
    const Vec ZtFinv_v = Z.transpose() * llt.solve(f.innovation[k]);
    const Mat ZtFinvZ = Z.transpose() * FinvZ;
    if (k + 1 < n) {
      // L_k = T_{k+1} (I - P_k Z' F_k^{-1} Z)
      const Mat L = f.jacobian[k + 1] * (Mat::Identity(dim, dim) - P * ZtFinvZ);
      r = (ZtFinv_v + L.transpose() * r).eval();
      N = (ZtFinvZ + L.transpose() * N * L).eval();
    } else {
      r = ZtFinv_v;
      N = ZtFinvZ;
    }
    kalman::symmetrize(N);
  }
  return s;
}

SimulationResult simulate(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                          const EnergySeries& energy, const Vec& x0, std::uint64_t seed,
                          const Vec& state_drift) {
  energy.validate();
  validate_params(spec, params);
  if (x0.size() != layout.size()) throw ModelError("initial state dimension does not match layout");
  if (state_drift.size() != 0 && state_drift.size() != layout.size()) {
    throw ModelError("state drift dimension does not match layout");
  }
  const auto obs_kinds = observables(spec);
  const NoiseCovariances noise = noise_covariances(spec, layout, params);
  const int dim = layout.size();
  const int p = static_cast<int>(obs_kinds.size());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = energy.size();
  SimulationResult out;
  auto& o = out.observations;
  o.years = energy.years;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  o.emissions.assign(n, nan);
  o.gdp.assign(n, nan);
  o.renewables.assign(n, nan);
  out.states.reserve(n);

  Vec x = x0;
  apply_parameter_states(spec, layout, params, x);
  for (std::size_t t = 0; t < n; ++t) {
    const ExogInput u = energy.at(t);
    Vec eta(dim);
    for (int i = 0; i < dim; ++i) eta[i] = std::sqrt(noise.state(i, i)) * normal(rng);
    const Mat L = disturbance_loading(spec, layout, x, u);
    x = transition(spec, layout, params, x, u) + L * eta;
    if (state_drift.size() != 0) x += state_drift;
    ObsVec y = measurement(spec, layout, params, x, u.year);
    for (int i = 0; i < p; ++i) y[i] += std::sqrt(noise.measurement(i, i)) * normal(rng);
    for (int i = 0; i < p; ++i) o.series(obs_kinds[static_cast<std::size_t>(i)])[t] = y[i];
    out.states.push_back(x);
  }
  if (spec.renewables_exogenous()) o.renewables = energy.renewables;
  return out;
}

}  // namespace e3s2
