#include "e3s2/scenario.hpp"

#include "e3s2/data_io.hpp"
#include "e3s2/montecarlo.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace e3s2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void check_len(const std::vector<double>& v, std::size_t n, const char* name, bool optional) {
  if (optional && v.empty()) return;
  if (v.size() != n) throw DataError(std::string("pathway column '") + name + "' has wrong length");
}

}  // namespace

void ScenarioPathway::validate() const {
  const std::size_t n = years.size();
  if (n == 0) throw DataError("empty pathway");
  check_len(coal, n, "coal", false);
  check_len(oil, n, "oil", false);
  check_len(gas, n, "gas", false);
  check_len(nuclear, n, "nuclear", false);
  check_len(renewables, n, "renewables", false);
  check_len(ccs, n, "ccs", true);
  check_len(gdp, n, "gdp", true);
  for (std::size_t i = 1; i < n; ++i) {
    if (years[i] <= years[i - 1]) throw DataError("pathway years must be strictly increasing");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (double v : {coal[i], oil[i], gas[i], nuclear[i], renewables[i]}) {
      if (!std::isfinite(v) || v < 0) {
        throw DataError("invalid pathway energy in year " + std::to_string(years[i]));
      }
    }
    if (!ccs.empty() && !std::isfinite(ccs[i])) throw DataError("invalid ccs in year " + std::to_string(years[i]));
    if (!gdp.empty() && !std::isfinite(gdp[i])) throw DataError("invalid gdp in year " + std::to_string(years[i]));
  }
}

ScenarioPathway load_pathway_csv(const std::filesystem::path& path, const std::string& scenario_id) {
  const CsvTable t = read_csv(path);
  ScenarioPathway p;
  p.scenario_id = scenario_id.empty() ? path.stem().string() : scenario_id;
  const int iy = t.column("year");
  const int ic = t.column("coal"), io = t.column("oil"), ig = t.column("gas");
  const int in = t.column("nuclear"), ir = t.column("renewables");
  const int iccs = t.find_column("ccs"), igdp = t.find_column("gdp");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    p.years.push_back(static_cast<int>(t.number(r, iy)));
    p.coal.push_back(t.number(r, ic));
    p.oil.push_back(t.number(r, io));
    p.gas.push_back(t.number(r, ig));
    p.nuclear.push_back(t.number(r, in));
    p.renewables.push_back(t.number(r, ir));
    if (iccs >= 0) p.ccs.push_back(t.number(r, iccs));
    if (igdp >= 0) p.gdp.push_back(t.number(r, igdp));
  }
  p.validate();
  return p;
}

Json ProjectionAnchor::to_json() const {
  Json j;
  j["variant"] = std::string(to_string(variant));
  j["endogenous_R"] = endogenous_R;
  j["anchor_year"] = anchor_year;
  auto th = Json::object();
  for (std::size_t i = 0; i < theta_names.size(); ++i) th[theta_names[i]] = json_number(theta[static_cast<Eigen::Index>(i)]);
  j["theta"] = std::move(th);
  auto om = Json::array();
  for (Eigen::Index i = 0; i < omega.rows(); ++i) {
    auto row = Json::array();
    for (Eigen::Index k = 0; k < omega.cols(); ++k) row.push_back(json_number(omega(i, k)));
    om.push_back(std::move(row));
  }
  j["omega"] = std::move(om);
  j[variant == Variant::E3S2_G ? "log_beta_Y_mean" : "beta_Y_mean"] = json_number(beta_y_mean);
  j[variant == Variant::E3S2_G ? "log_beta_Y_var" : "beta_Y_var"] = json_number(beta_y_var);
  if (endogenous_R) {
    j["R_mean"] = json_number(r_mean);
    j["R_var"] = json_number(r_var);
  }
  j["var_eta_E"] = json_number(var_eta_E);
  j["var_eta_Y"] = json_number(var_eta_Y);
  j["var_eta_beta_Y"] = json_number(var_eta_beta_Y);
  if (endogenous_R) j["var_eta_R"] = json_number(var_eta_R);
  return j;
}

ProjectionAnchor build_anchor(const FitResult& fit, const SmootherOutput& smooth, int anchor_year, int window) {
  const ModelSpec& spec = fit.spec;
  if (spec.emissions_only) throw SpecError("projection needs the full model");
  if (window < 1) throw DataError("anchor window must be positive");
  const auto& years = smooth.years;
  const auto it = std::find(years.begin(), years.end(), anchor_year);
  if (it == years.end()) throw DataError("anchor year " + std::to_string(anchor_year) + " outside the sample");
  const auto a = static_cast<std::size_t>(it - years.begin());
  if (a + 1 < static_cast<std::size_t>(window)) {
    throw DataError("anchor window starting " + std::to_string(anchor_year - window + 1) + " outside the sample");
  }
  const std::size_t w0 = a + 1 - static_cast<std::size_t>(window);
  const StateLayout layout = build_layout(spec);
  const bool g = spec.variant == Variant::E3S2_G;

  ProjectionAnchor an;
  an.variant = spec.variant;
  an.endogenous_R = !spec.renewables_exogenous();
  an.anchor_year = anchor_year;

  auto window_median = [&](State s, double& mean, double& var) {
    const int i = layout.index(s);
    std::vector<double> m, v;
    for (std::size_t t = w0; t <= a; ++t) {
      m.push_back(smooth.mean[t][i]);
      v.push_back(std::max(0.0, smooth.cov[t](i, i)));
    }
    mean = median_of(m);
    var = median_of(v);
  };

  struct Entry {
    std::string name;
    double value;
    double var;
    int free_index;  // -1 when not a free parameter
  };
  std::vector<Entry> entries;
  auto from_fit = [&](Param p) {
    const std::string name(to_string(p));
    const int k = fit.index_of(name);
    double var = 0.0;
    if (k >= 0 && fit.covariance.cov.rows() > k) var = fit.covariance.cov(k, k);
    entries.push_back({name, fit.params[p], var, k});
  };
  auto from_state = [&](Param p, State s, bool at_anchor) {
    const int i = layout.index(s);
    double m, v;
    if (at_anchor) {
      m = smooth.mean[a][i];
      v = std::max(0.0, smooth.cov[a](i, i));
    } else {
      window_median(s, m, v);
    }
    entries.push_back({std::string(to_string(p)), m, v, -1});
  };

  if (!g && spec.tv_beta_C) from_state(Param::BetaC, State::BetaC, true); else from_fit(Param::BetaC);
  if (!g && spec.tv_beta_O) from_state(Param::BetaO, State::BetaO, true); else from_fit(Param::BetaO);
  if (!g && spec.tv_beta_G) from_state(Param::BetaG, State::BetaG, true); else from_fit(Param::BetaG);
  if (g) {
    from_fit(spec.two_stage_break ? Param::G2 : Param::G);
  } else {
    if (spec.ll_beta_Y) from_state(Param::DBetaY, State::DBetaY, false); else from_fit(Param::DBetaY);
    if (an.endogenous_R) {
      if (spec.ll_R) from_state(Param::DR, State::DR, false); else from_fit(Param::DR);
    }
  }

  const auto k = static_cast<Eigen::Index>(entries.size());
  an.theta = Eigen::VectorXd(k);
  an.omega = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& e = entries[static_cast<std::size_t>(i)];
    an.theta_names.push_back(e.name);
    an.theta[i] = e.value;
    an.omega(i, i) = e.var;
    for (Eigen::Index j = 0; j < i; ++j) {
      const auto& f = entries[static_cast<std::size_t>(j)];
      if (e.free_index >= 0 && f.free_index >= 0 && fit.covariance.cov.rows() > std::max(e.free_index, f.free_index)) {
        an.omega(i, j) = an.omega(j, i) = fit.covariance.cov(e.free_index, f.free_index);
      }
    }
  }

  window_median(State::BetaY, an.beta_y_mean, an.beta_y_var);
  if (an.endogenous_R) window_median(State::R, an.r_mean, an.r_var);
  const NoiseCovariances noise = noise_covariances(spec, layout, fit.params);
  an.var_eta_E = noise.state(layout.index(State::E), layout.index(State::E));
  an.var_eta_Y = noise.state(layout.index(State::Y), layout.index(State::Y));
  an.var_eta_beta_Y = noise.state(layout.index(State::BetaY), layout.index(State::BetaY));
  if (an.endogenous_R) an.var_eta_R = noise.state(layout.index(State::R), layout.index(State::R));
  return an;
}

double hazen_percentile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) return kNaN;
  const double h = static_cast<double>(n) * p + 0.5;  // 1-based position
  if (h <= 1.0) return sorted.front();
  if (h >= static_cast<double>(n)) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  const double a = sorted[lo - 1], b = sorted[lo];
  return frac == 0.0 ? a : a + frac * (b - a);
}

const Band& ProjectionBands::at(const std::string& variable, int year) const {
  for (const auto& b : bands) {
    if (b.variable == variable && b.year == year) return b;
  }
  throw std::out_of_range("no band for " + variable + " in " + std::to_string(year));
}

void ProjectionBands::write_csv(std::ostream& os) const {
  os << "year,variable,p5,p50,p95\n";
  for (const auto& b : bands) {
    os << b.year << ',' << b.variable << ',' << format_number(b.p5) << ',' << format_number(b.p50) << ','
       << format_number(b.p95) << '\n';
  }
}

Json ProjectionBands::to_json() const {
  Json j;
  j["scenario_id"] = scenario_id;
  j["anchor_year"] = anchor_year;
  j["n_draws"] = n_draws;
  j["n_clamped"] = n_clamped;
  j["omega_projected"] = omega_projected;
  j["warnings"] = warnings;
  j["anchor"] = anchor;
  auto arr = Json::array();
  for (const auto& b : bands) {
    arr.push_back({{"year", b.year},
                   {"variable", b.variable},
                   {"p5", json_number(b.p5)},
                   {"p50", json_number(b.p50)},
                   {"p95", json_number(b.p95)}});
  }
  j["bands"] = std::move(arr);
  return j;
}

namespace {

enum Var { kEmissions, kGdp, kBetaY, kRenewables, kVarCount };
constexpr const char* kVarNames[kVarCount] = {"emissions", "gdp", "beta_Y", "renewables"};

ProjectionBands run_projection(const ProjectionAnchor& an, const ScenarioPathway& pw, const ProjectionConfig& cfg) {
  pw.validate();
  if (cfg.n_draws < 1) throw SpecError("n_draws must be positive");
  if (pw.years.front() <= an.anchor_year) {
    throw DataError("pathway must start after the anchor year " + std::to_string(an.anchor_year));
  }
  const bool g = an.variant == Variant::E3S2_G;
  const bool endo = an.endogenous_R && !g;
  const auto k = static_cast<Eigen::Index>(an.theta.size());
  auto idx = [&](const std::string& name) {
    for (std::size_t i = 0; i < an.theta_names.size(); ++i) {
      if (an.theta_names[i] == name) return static_cast<Eigen::Index>(i);
    }
    return Eigen::Index{-1};
  };
  const Eigen::Index i_bc = idx("beta_C"), i_bo = idx("beta_O"), i_bg = idx("beta_G");
  const Eigen::Index i_dby = idx("d_beta_Y"), i_dr = idx("d_R");
  Eigen::Index i_g = idx("g2");
  if (i_g < 0) i_g = idx("g");
  if (i_bc < 0 || i_bo < 0 || i_bg < 0 || (g ? i_g < 0 : i_dby < 0) || (endo && i_dr < 0)) {
    throw SpecError("projection anchor is missing parameters");
  }

  ProjectionBands out;
  out.scenario_id = pw.scenario_id;
  out.anchor_year = an.anchor_year;
  out.n_draws = cfg.n_draws;
  out.anchor = an.to_json();

  // Square-root factor of Omega after projection onto the PSD cone.
  Eigen::MatrixXd omega = 0.5 * (an.omega + an.omega.transpose());
  if (cfg.diagonal_omega) omega = Eigen::MatrixXd(omega.diagonal().asDiagonal());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
  if (k > 0 && omega.cwiseAbs().maxCoeff() > 0) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(omega);
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < k; ++i) {
      if (lam[i] < 0) {
        if (lam[i] < -1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff())) out.omega_projected = true;
        lam[i] = 0.0;
      }
    }
    A = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
  }
  if (out.omega_projected) {
    out.warnings.push_back("parameter covariance not PSD; projected to the nearest PSD matrix");
    spdlog::warn("parameter covariance not PSD; projected");
  }

  const std::size_t n = pw.size();
  const auto nd = static_cast<std::size_t>(cfg.n_draws);
  // draws[var][year][draw]
  std::vector<std::vector<std::vector<double>>> draws(kVarCount, std::vector<std::vector<double>>(n, std::vector<double>(nd)));
  std::vector<char> clamped(nd, 0);

  const double sd_e = std::sqrt(an.var_eta_E), sd_y = std::sqrt(an.var_eta_Y);
  const double sd_b = std::sqrt(an.var_eta_beta_Y), sd_r = std::sqrt(an.var_eta_R);

  parallel_for(cfg.n_draws, cfg.jobs, [&](int draw) {
    const auto d = static_cast<std::size_t>(draw);
    std::mt19937_64 rng(run_seed(cfg.seed, draw));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(k);
    for (Eigen::Index i = 0; i < k; ++i) z[i] = normal(rng);
    Eigen::VectorXd th = an.theta + A * z;
    for (Eigen::Index i : {i_bc, i_bo, i_bg}) {
      if (th[i] < 0) {
        th[i] = 0.0;
        clamped[d] = 1;
      }
    }
    double by = an.beta_y_mean + std::sqrt(std::max(0.0, an.beta_y_var)) * normal(rng);
    double r = endo ? an.r_mean + std::sqrt(std::max(0.0, an.r_var)) * normal(rng) : 0.0;
    const double drift_b = g ? th[i_g] : th[i_dby];
    const double drift_r = endo ? th[i_dr] : 0.0;
    int prev = an.anchor_year;
    for (std::size_t t = 0; t < n; ++t) {
      const ExogInput u = pw.at(t);
      const int gap = u.year - prev;
      prev = u.year;
      if (gap > 1) {
        const double m = gap - 1.0;
        by += drift_b * m + std::sqrt(m) * sd_b * normal(rng);
        if (endo) r += drift_r * m + std::sqrt(m) * sd_r * normal(rng);
      }
      const double eta_e = sd_e * normal(rng);
      const double eta_y = sd_y * normal(rng);
      const double eta_b = sd_b * normal(rng);
      const double eta_r = endo ? sd_r * normal(rng) : 0.0;
      const double e = th[i_bc] * u.coal + th[i_bo] * u.oil + th[i_bg] * u.gas + eta_e;
      double y;
      if (g) {
        y = std::exp(by) * (u.non_renewable() + u.renewables) + eta_y;
      } else if (endo) {
        y = by * (u.non_renewable() + drift_r + r) + by * eta_r + eta_y;
      } else {
        y = by * (u.non_renewable() + u.renewables) + eta_y;
      }
      by += drift_b + eta_b;
      if (endo) r += drift_r + eta_r;
      draws[kEmissions][t][d] = e;
      draws[kGdp][t][d] = y;
      draws[kBetaY][t][d] = g ? std::exp(by) : by;
      draws[kRenewables][t][d] = endo ? r : u.renewables;
    }
  });

  for (char c : clamped) out.n_clamped += c;
  if (out.n_clamped > 0) {
    out.warnings.push_back(std::to_string(out.n_clamped) + " draws clamped a negative conversion factor to 0");
  }

  for (int v = 0; v < kVarCount; ++v) {
    if (v == kRenewables && !endo) continue;
    for (std::size_t t = 0; t < n; ++t) {
      auto& x = draws[static_cast<std::size_t>(v)][t];
      if (cfg.keep_draws) out.draws[kVarNames[v]].push_back(x);
      std::sort(x.begin(), x.end());
      Band b{pw.years[t], kVarNames[v], hazen_percentile(x, 0.05), hazen_percentile(x, 0.50),
             hazen_percentile(x, 0.95)};
      if (v == kEmissions && cfg.subtract_ccs && !pw.ccs.empty()) {
        b.p5 -= pw.ccs[t];
        b.p50 -= pw.ccs[t];
        b.p95 -= pw.ccs[t];
      }
      if (!(b.p5 <= b.p50 && b.p50 <= b.p95)) throw NumericalError("percentile ordering violated", static_cast<int>(t));
      out.bands.push_back(b);
    }
  }
  if (cfg.keep_draws && cfg.subtract_ccs && !pw.ccs.empty()) {
    auto& e = out.draws["emissions"];
    for (std::size_t t = 0; t < n; ++t) {
      for (double& x : e[t]) x -= pw.ccs[t];
    }
  }
  return out;
}

}  // namespace

ProjectionBands project(const ProjectionAnchor& anchor, const ScenarioPathway& pathway,
                        const ProjectionConfig& config) {
  return run_projection(anchor, pathway, config);
}

ProjectionBands project_geometric(const ProjectionAnchor& anchor, const ScenarioPathway& pathway,
                                  const ProjectionConfig& config) {
  if (anchor.variant != Variant::E3S2_G) throw SpecError("project_geometric needs an E3S2-g anchor");
  return run_projection(anchor, pathway, config);
}

std::string_view to_string(TrendTarget t) { return t == TrendTarget::DR ? "d_R" : "d_beta_Y"; }

namespace {

struct TrendModel {
  std::vector<double> a, b, y, gap;
  double noise_var = 1.0;
  double big_k = kDefaultBigK;

  // Exact Kalman log-likelihood of the local linear trend, first
  // observation treated as the diffuse burn-in.
  double loglik(double d) const {
    const std::size_t n = y.size();
    Vec x(1);
    Mat P(1, 1);
    x[0] = (y[0] - b[0]) / a[0];
    P(0, 0) = big_k;
    ObsStateMat Z(1, 1);
    ObsMat H(1, 1);
    H(0, 0) = noise_var;
    ObsVec yy(1), yp(1);
    double ll = 0.0;
    kalman::Update upd;
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) x[0] += d * gap[k];
      Z(0, 0) = a[k];
      yy[0] = y[k];
      yp[0] = a[k] * x[0] + b[k];
      if (!kalman::update(x, P, yy, yp, Z, H, upd)) throw NumericalError("trend filter: singular innovation", static_cast<int>(k));
      if (k > 0) ll += upd.loglik;
      x = upd.mean;
      P = upd.cov;
    }
    return ll;
  }
};

}  // namespace

ImpliedTrendResult implied_trend(const ScenarioPathway& pathway, const ImpliedTrendInput& in, TrendTarget target) {
  pathway.validate();
  if (pathway.gdp.empty()) throw DataError("implied trend needs scenario GDP");
  if (pathway.size() < 3) throw DataError("implied trend needs at least three pathway years");
  if (!(in.noise_var > 0)) throw SpecError("noise variance must be positive");
  TrendModel m;
  m.noise_var = in.noise_var;
  m.big_k = in.big_k;
  for (std::size_t k = 0; k < pathway.size(); ++k) {
    const ExogInput u = pathway.at(k);
    if (target == TrendTarget::DBetaY) {
      m.a.push_back(u.non_renewable() + u.renewables);
      m.b.push_back(0.0);
    } else {
      const double s = in.beta_y0 + in.d_beta_y * (u.year - in.base_year);
      m.a.push_back(s);
      m.b.push_back(s * u.non_renewable());
    }
    m.y.push_back(pathway.gdp[k]);
    m.gap.push_back(k == 0 ? 0.0 : static_cast<double>(u.year - pathway.years[k - 1]));
  }
  for (double a : m.a) {
    if (!(std::abs(a) > 0)) throw DataError("implied trend not identified: zero loading in the scenario");
  }

  // The log-likelihood is exactly quadratic in d: locate the vertex from three
  // points, then repeat once around the vertex with a step of one SE.
  auto vertex = [&](double d0, double h, double& curv) {
    const double lm = m.loglik(d0 - h), l0 = m.loglik(d0), lp = m.loglik(d0 + h);
    curv = (lp - 2.0 * l0 + lm) / (h * h);
    if (!(curv < 0) || !std::isfinite(curv)) {
      throw DataError("implied trend not identified: flat likelihood in the trend");
    }
    return d0 - (lp - lm) / (2.0 * h * curv);
  };
  const double z0 = (m.y.front() - m.b.front()) / m.a.front();
  const double z1 = (m.y.back() - m.b.back()) / m.a.back();
  const double span = static_cast<double>(pathway.years.back() - pathway.years.front());
  const double d0 = (z1 - z0) / span;
  double curv = 0.0;
  double d = vertex(d0, std::max(1e-3 * std::abs(d0), 1e-6), curv);
  const double se = 1.0 / std::sqrt(-curv);
  d = vertex(d, se, curv);

  ImpliedTrendResult res;
  res.target = target;
  res.estimate = d;
  res.stderr = 1.0 / std::sqrt(-curv);
  res.loglik = m.loglik(d);
  return res;
}

std::vector<double> harmonize_series(const std::vector<int>& years, const std::vector<double>& values,
                                     int anchor_year, double anchor_value) {
  if (years.size() != values.size()) throw DataError("years and values differ in length");
  const auto it = std::find(years.begin(), years.end(), anchor_year);
  if (it == years.end()) throw DataError("anchor year " + std::to_string(anchor_year) + " not in series");
  const double base = values[static_cast<std::size_t>(it - years.begin())];
  if (base == 0.0 || !std::isfinite(base)) throw DataError("series is zero at the anchor year");
  const double f = anchor_value / base;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * f;
  return out;
}

}  // namespace e3s2
