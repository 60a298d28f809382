#include "e3s2/estimation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace e3s2 {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_step(const std::vector<double>& v, std::size_t first, std::size_t last) {
  if (last <= first + 1 || last > v.size()) return 0.0;
  return (v[last - 1] - v[first]) / static_cast<double>(last - 1 - first);
}

double diff_variance(const std::vector<double>& v) {
  if (v.size() < 3) return 0.0;
  std::vector<double> d(v.size() - 1);
  for (std::size_t i = 1; i < v.size(); ++i) d[i - 1] = v[i] - v[i - 1];
  const double m = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  double s = 0.0;
  for (double x : d) s += (x - m) * (x - m);
  return s / static_cast<double>(d.size() - 1);
}

struct Scaling {
  std::vector<double> scale;
  std::vector<bool> variance;
};

Scaling make_scaling(const std::vector<FreeParameter>& free, const ParameterVector& init, const ModelSpec& spec,
                     const ObservationSeries& obs) {
  Scaling s;
  for (const auto& fp : free) {
    const double v = get(init, fp.ref);
    double fallback = 1e-2;
    if (fp.variance) {
      fallback = 1e-4;
    } else if (fp.ref.dummy >= 0) {
      const auto& d = spec.dummies[static_cast<std::size_t>(fp.ref.dummy)];
      fallback = std::sqrt(diff_variance(obs.series(d.target)));
      if (!(fallback > 0)) fallback = 1.0;
    } else if (fp.ref.id == Param::Phi) {
      fallback = 0.5;
    }
    s.scale.push_back(std::abs(v) > 0 ? std::abs(v) : fallback);
    s.variance.push_back(fp.variance);
  }
  return s;
}

// Maps optimizer coordinates to parameter values (hinge on variances).
void apply(const std::vector<FreeParameter>& free, const Scaling& sc, std::span<const double> u,
           ParameterVector& p) {
  for (std::size_t i = 0; i < free.size(); ++i) {
    double v = u[i] * sc.scale[i];
    if (sc.variance[i]) v = std::max(0.0, v);
    set(p, free[i].ref, v);
  }
}

double neg_loglik(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& p,
                  const EnergySeries& energy, const ObservationSeries& obs, const InitSpec& init) {
  if (spec.variant == Variant::E3S2_G && !(std::abs(p[Param::Phi]) < 1.0)) return kInf;
  const double ll = log_likelihood(spec, layout, p, energy, obs, init);
  return std::isfinite(ll) ? -ll : kInf;
}

}  // namespace

int FitResult::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < free.size(); ++i) {
    if (free[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<FreeParameter> optimized_parameters(const ModelSpec& spec, const std::vector<std::string>& fixed) {
  auto free = free_parameters(spec);
  for (const auto& name : fixed) {
    const auto it = std::find_if(free.begin(), free.end(), [&](const FreeParameter& fp) { return fp.name == name; });
    if (it == free.end()) throw SpecError("fixed parameter '" + name + "' is not free under this spec");
    free.erase(it);
  }
  return free;
}

ParameterVector default_initial_guess(const ModelSpec& spec, const EnergySeries& energy,
                                      const ObservationSeries& obs) {
  ParameterVector p;
  p.dummies().assign(spec.dummies.size(), 0.0);
  p[Param::BetaC] = kMarlandCoal;
  p[Param::BetaO] = kMarlandOil;
  p[Param::BetaG] = kMarlandGas;
  p[Param::Phi] = 0.5;

  const std::size_t n = std::min(energy.size(), obs.size());
  std::vector<double> prod, logprod, factor;
  for (std::size_t t = 0; t < n; ++t) {
    const ExogInput u = energy.at(t);
    const double tot = u.non_renewable() + u.renewables;
    const double b = tot > 0 ? obs.gdp.empty() ? 0.0 : obs.gdp[t] / tot : 0.0;
    prod.push_back(b);
    logprod.push_back(b > 0 ? std::log(b) : 0.0);
    factor.push_back(u.fossil() > 0 ? obs.emissions[t] / u.fossil() : 0.0);
  }

  p[Param::DBetaY] = mean_step(prod, 0, n);
  if (!obs.renewables.empty()) p[Param::DR] = mean_step(obs.renewables, 0, n);
  if (spec.two_stage_break) {
    std::size_t k = 0;
    while (k < n && energy.years[k] < *spec.two_stage_break) ++k;
    p[Param::G] = mean_step(logprod, 0, std::min(k + 1, n));
    p[Param::G2] = mean_step(logprod, k > 0 ? k - 1 : 0, n);
  } else {
    p[Param::G] = mean_step(logprod, 0, n);
  }

  const double vE = diff_variance(obs.emissions);
  const double vY = obs.gdp.empty() ? 0.0 : diff_variance(obs.gdp);
  const double vR = obs.renewables.empty() ? 0.0 : diff_variance(obs.renewables);
  const double vB = diff_variance(spec.variant == Variant::E3S2_G ? logprod : prod);
  const double vF = diff_variance(factor);
  p[Param::VarEtaE] = 0.1 * vE;
  p[Param::VarEpsE] = 0.1 * vE;
  p[Param::VarEtaY] = 0.1 * vY;
  p[Param::VarEpsY] = 0.1 * vY;
  p[Param::VarEtaR] = 0.1 * vR;
  p[Param::VarEpsR] = 0.1 * vR;
  p[Param::VarEtaDR] = 0.01 * vR;
  p[Param::VarEtaBetaY] = 0.1 * vB;
  p[Param::VarEtaDBetaY] = 0.01 * vB;
  p[Param::VarEtaBetaC] = 0.1 * vF;
  p[Param::VarEtaBetaO] = 0.1 * vF;
  p[Param::VarEtaBetaG] = 0.1 * vF;
  p[Param::VarEtaAlpha] = 0.1 * vE;
  return p;
}

FitResult fit_mle(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs,
                  const ParameterVector& init_guess, const OptimizerConfig& config) {
  spec.validate();
  check_alignment(spec, energy, obs);
  validate_params(spec, init_guess);
  const StateLayout layout = build_layout(spec);

  FitResult res;
  res.spec = spec;
  res.free = optimized_parameters(spec, config.fixed);
  const Scaling sc = make_scaling(res.free, init_guess, spec, obs);
  const std::size_t k = res.free.size();

  auto objective_from = [&](const ParameterVector& base) {
    return [&, base](std::span<const double> u) {
      ParameterVector p = base;
      apply(res.free, sc, u, p);
      return neg_loglik(spec, layout, p, energy, obs, config.init);
    };
  };

  std::vector<double> steps(k);
  for (std::size_t i = 0; i < k; ++i) steps[i] = sc.variance[i] ? config.variance_step : config.level_step;

  std::vector<ParameterVector> starts{init_guess};
  for (const auto& s : config.extra_starts) {
    validate_params(spec, s);
    ParameterVector merged = s;
    // Fixed parameters always come from the primary guess.
    for (const auto& fp : free_parameters(spec)) {
      if (std::find(config.fixed.begin(), config.fixed.end(), fp.name) != config.fixed.end()) {
        set(merged, fp.ref, get(init_guess, fp.ref));
      }
    }
    starts.push_back(merged);
  }

  res.initial_loglik = log_likelihood(spec, layout, init_guess, energy, obs, config.init);
  double best = kInf;
  for (const auto& start : starts) {
    std::vector<double> u0(k);
    for (std::size_t i = 0; i < k; ++i) u0[i] = get(start, res.free[i].ref) / sc.scale[i];
    const auto f = objective_from(start);
    const NelderMeadResult nm = nelder_mead(f, u0, steps, config.nelder_mead);
    res.n_iter += nm.iterations;
    res.n_eval += nm.evaluations;
    if (nm.value < best) {
      best = nm.value;
      res.params = start;
      apply(res.free, sc, nm.x, res.params);
      res.converged = nm.converged;
    }
  }
  if (!std::isfinite(best)) {
    throw NumericalError("likelihood is not finite anywhere on the search path", 0);
  }
  // The start itself is never worse than the optimum returned.
  if (std::isfinite(res.initial_loglik) && res.initial_loglik > -best) {
    res.params = init_guess;
    best = -res.initial_loglik;
  }
  res.filter = ekf_filter(spec, layout, res.params, energy, obs, config.init);
  res.loglik = res.filter.loglik;
  if (!res.converged) spdlog::warn("Nelder-Mead did not converge after {} iterations", res.n_iter);
  if (config.compute_stderr) {
    res.covariance = stderr_hessian(spec, energy, obs, res.params, config.init, config.fixed);
  } else {
    res.covariance.stderr.assign(k, kNaN);
    res.covariance.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    res.covariance.at_boundary.assign(k, false);
  }
  return res;
}

Eigen::MatrixXd numerical_hessian(const std::function<double(std::span<const double>)>& f,
                                  const std::vector<double>& theta, const std::vector<double>& steps) {
  const std::size_t n = theta.size();
  Eigen::MatrixXd H(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double f0 = f(theta);
  std::vector<double> x = theta;
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    x = theta;
    x[i] += di;
    x[j] += dj;
    return f(x);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double h = steps[i];
    const double fp = at(i, h, i, 0.0), fm = at(i, -h, i, 0.0);
    H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = (fp - 2.0 * f0 + fm) / (h * h);
    for (std::size_t j = 0; j < i; ++j) {
      const double hj = steps[j];
      const double v = (at(i, h, j, hj) - at(i, h, j, -hj) - at(i, -h, j, hj) + at(i, -h, j, -hj)) / (4.0 * h * hj);
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return H;
}

CovarianceEstimate covariance_from_hessian(const Eigen::MatrixXd& hessian) {
  const Eigen::Index n = hessian.rows();
  CovarianceEstimate out;
  out.cov = Eigen::MatrixXd::Zero(n, n);
  out.stderr.assign(static_cast<std::size_t>(n), kNaN);
  out.at_boundary.assign(static_cast<std::size_t>(n), false);
  if (n == 0) return out;
  if (!hessian.allFinite()) {
    out.warnings.push_back("Hessian has non-finite entries; standard errors unavailable");
    return out;
  }
  const Eigen::MatrixXd H = 0.5 * (hessian + hessian.transpose());

  // Work on the diagonally scaled Hessian so the eigenvalue threshold is
  // independent of parameter units.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (H(i, i) > 0) {
      keep.push_back(i);
    } else {
      out.clipped = true;
      out.warnings.push_back("non-positive curvature for parameter " + std::to_string(i) + "; excluded");
    }
  }
  const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
  if (m == 0) return out;
  Eigen::VectorXd d(m);
  Eigen::MatrixXd C(m, m);
  for (Eigen::Index a = 0; a < m; ++a) d[a] = 1.0 / std::sqrt(H(keep[a], keep[a]));
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) C(a, b) = H(keep[a], keep[b]) * d[a] * d[b];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::MatrixXd& V = es.eigenvectors();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(m);
  constexpr double kFloor = 1e-10;
  for (Eigen::Index a = 0; a < m; ++a) {
    if (lam[a] < 0) out.clipped = true;
    if (lam[a] > kFloor) {
      inv[a] = 1.0 / lam[a];
    } else {
      out.pseudo_inverse = true;
    }
  }
  if (out.clipped) out.warnings.push_back("Hessian not positive semi-definite; eigenvalues clipped at 1e-10");
  if (out.pseudo_inverse) out.warnings.push_back("near-singular Hessian; covariance is a pseudo-inverse");
  const Eigen::MatrixXd Cinv = V * inv.asDiagonal() * V.transpose();
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) out.cov(keep[a], keep[b]) = Cinv(a, b) * d[a] * d[b];
  }
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  for (Eigen::Index a = 0; a < m; ++a) {
    out.stderr[static_cast<std::size_t>(keep[a])] = std::sqrt(std::max(0.0, out.cov(keep[a], keep[a])));
  }
  return out;
}

CovarianceEstimate stderr_hessian(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs,
                                  const ParameterVector& params_hat, const InitSpec& init,
                                  const std::vector<std::string>& fixed) {
  const StateLayout layout = build_layout(spec);
  const auto free = optimized_parameters(spec, fixed);
  const std::size_t k = free.size();

  std::vector<std::size_t> active;
  std::vector<bool> boundary(k, false);
  for (std::size_t i = 0; i < k; ++i) {
    if (free[i].variance && get(params_hat, free[i].ref) <= 0.0) {
      boundary[i] = true;
    } else {
      active.push_back(i);
    }
  }
  std::vector<double> theta, steps;
  for (std::size_t i : active) {
    const double v = get(params_hat, free[i].ref);
    double h = 1e-4 * std::max(1.0, std::abs(v));
    if (free[i].variance) h = std::min(h, 1e-2 * v);
    theta.push_back(v);
    steps.push_back(h);
  }
  const auto f = [&](std::span<const double> x) {
    ParameterVector p = params_hat;
    for (std::size_t a = 0; a < active.size(); ++a) set(p, free[active[a]].ref, x[a]);
    return neg_loglik(spec, layout, p, energy, obs, init);
  };
  const CovarianceEstimate sub = covariance_from_hessian(numerical_hessian(f, theta, steps));

  CovarianceEstimate out;
  out.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  out.stderr.assign(k, kNaN);
  out.at_boundary = boundary;
  out.pseudo_inverse = sub.pseudo_inverse;
  out.clipped = sub.clipped;
  out.warnings = sub.warnings;
  for (std::size_t a = 0; a < active.size(); ++a) {
    out.stderr[active[a]] = sub.stderr[a];
    for (std::size_t b = 0; b < active.size(); ++b) {
      out.cov(static_cast<Eigen::Index>(active[a]), static_cast<Eigen::Index>(active[b])) =
          sub.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (boundary[i]) out.warnings.push_back(free[i].name + " estimated at the zero boundary; no standard error");
  }
  for (const auto& w : out.warnings) spdlog::debug("stderr: {}", w);
  return out;
}

}  // namespace e3s2
