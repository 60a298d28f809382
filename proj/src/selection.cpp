#include "e3s2/selection.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace e3s2 {

namespace {

struct Fitted {
  FitResult fit;
  SmootherOutput smooth;
};

class SelectionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Starting values for `spec`: defaults, overwritten by any same-named value
// from a previous fit.
ParameterVector carry_over(const ModelSpec& spec, const EnergySeries& energy, const ObservationSeries& obs,
                           const FitResult* prev) {
  ParameterVector start = default_initial_guess(spec, energy, obs);
  if (!prev) return start;
  for (const auto& fp : free_parameters(spec)) {
    const int k = prev->index_of(fp.name);
    if (k >= 0) set(start, fp.ref, get(prev->params, prev->free[static_cast<std::size_t>(k)].ref));
  }
  return start;
}

Fitted refit(const ModelSpec& spec, const ParameterVector& start, const EnergySeries& energy,
             const ObservationSeries& obs, const SelectionConfig& cfg,
             const std::vector<ParameterVector>& extra_starts = {}) {
  Fitted f;
  try {
    OptimizerConfig oc = cfg.optimizer;
    oc.extra_starts.insert(oc.extra_starts.end(), extra_starts.begin(), extra_starts.end());
    f.fit = fit_mle(spec, energy, obs, start, oc);
    f.smooth = ekf_smoother(f.fit.filter);
  } catch (const std::exception& e) {
    throw SelectionFailure(std::string("fit failed: ") + e.what());
  }
  if (!f.fit.converged) throw SelectionFailure("fit did not converge");
  return f;
}

struct Smoothed {
  double range = 0.0;
  double mean_sd = 0.0;
  double mean = 0.0;
};

Smoothed smoothed_stats(const SmootherOutput& s, int index) {
  Smoothed out;
  double lo = s.mean.front()[index], hi = lo, sd = 0.0, m = 0.0;
  for (std::size_t t = 0; t < s.mean.size(); ++t) {
    const double v = s.mean[t][index];
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    m += v;
    sd += std::sqrt(std::max(0.0, s.cov[t](index, index)));
  }
  const auto n = static_cast<double>(s.mean.size());
  out.range = hi - lo;
  out.mean_sd = sd / n;
  out.mean = m / n;
  return out;
}

bool is_flat(const Smoothed& s, const SelectionThresholds& th) { return s.range < th.flatness_factor * s.mean_sd; }

std::string fmt_flat(const Smoothed& s) {
  std::ostringstream os;
  os << "range=" << s.range << " mean_sd=" << s.mean_sd;
  return os.str();
}

double chi2_upper(double stat, double dof) {
  if (!(stat > 0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

class Runner {
 public:
  Runner(const EnergySeries& e, const ObservationSeries& o, const SelectionConfig& c) : energy_(e), obs_(o), cfg_(c) {}

  SelectionTrace run() {
    ModelSpec base;
    try {
      const ParameterVector start = cfg_.init_guess ? *cfg_.init_guess : default_initial_guess(base, energy_, obs_);
      cur_ = refit(base, start, energy_, obs_, cfg_);
      add("0", "fit", cur_.fit.loglik, 1.0, "base specification", "");
      step_a();
      step_drift("B", Observable::Renewables, State::DR);
      step_drift("C", Observable::Gdp, State::DBetaY);
      step_d();
    } catch (const SelectionFailure& e) {
      trace_.failed = true;
      trace_.failure = e.what();
      add(current_step_, "fit", std::nan(""), std::nan(""), "failure; stopping", e.what());
    }
    if (cur_.fit.filter.size() > 0) {
      trace_.final_spec = cur_.fit.spec;
      trace_.final_params = cur_.fit.params;
      trace_.final_loglik = cur_.fit.loglik;
    }
    return trace_;
  }

 private:
  void add(const std::string& step, const std::string& test, double stat, double p, const std::string& decision,
           const std::string& delta) {
    trace_.entries.push_back({step, test, stat, p, decision, delta});
    spdlog::debug("select {} {} stat={} p={} {} {}", step, test, stat, p, decision, delta);
  }

  // Ljung-Box on one observable over all configured lags; returns rejection.
  bool lb_rejects(const std::string& step, Observable o) {
    const auto v = cur_.fit.filter.standardized_series(o, true);
    std::vector<double> ps;
    for (int lag : cfg_.thresholds.lags) {
      const TestResult r = ljung_box(v, lag);
      ps.push_back(r.p_value);
      add(step, "ljung_box(" + std::string(to_string(o)) + ",lag=" + std::to_string(lag) + ")", r.statistic,
          r.p_value, "", "");
    }
    const bool rej = rejects(ps, cfg_.thresholds);
    trace_.entries.back().decision = rej ? "reject" : "accept";
    return rej;
  }

  Fitted fit_spec(const ModelSpec& spec, const FitResult& prev) {
    return refit(spec, carry_over(spec, energy_, obs_, &prev), energy_, obs_, cfg_);
  }

  // All factors time-varying. Besides the default start, the search also
  // starts with only one newly freed factor moving, and from the current model.
  Fitted fit_wide(const ModelSpec& all) {
    const ParameterVector start = carry_over(all, energy_, obs_, &cur_.fit);
    const std::pair<Param, bool ModelSpec::*> vars[] = {{Param::VarEtaBetaC, &ModelSpec::tv_beta_C},
                                                        {Param::VarEtaBetaO, &ModelSpec::tv_beta_O},
                                                        {Param::VarEtaBetaG, &ModelSpec::tv_beta_G}};
    std::vector<Param> fresh;
    for (const auto& [p, flag] : vars) {
      if (!(cur_.fit.spec.*flag)) fresh.push_back(p);
    }
    std::vector<ParameterVector> extras;
    for (Param keep : fresh) {
      ParameterVector x = start;
      for (Param p : fresh) {
        if (p != keep) x[p] = 0.0;
      }
      extras.push_back(x);
    }
    ParameterVector nested = start;
    for (Param p : fresh) nested[p] = 0.0;
    extras.push_back(nested);
    return refit(all, start, energy_, obs_, cfg_, extras);
  }

  void step_a() {
    current_step_ = "A";
    std::vector<ModelSpec> seen{cur_.fit.spec};
    for (int round = 0; round < cfg_.thresholds.max_factor_rounds; ++round) {
      if (!lb_rejects("A", Observable::Emissions)) return;
      ModelSpec all = cur_.fit.spec;
      all.tv_beta_C = all.tv_beta_O = all.tv_beta_G = true;
      Fitted wide = all == cur_.fit.spec ? cur_ : fit_wide(all);
      add("A", "fit", wide.fit.loglik, std::nan(""), "free all conversion factors", "+tv_beta_C,tv_beta_O,tv_beta_G");

      ModelSpec reduced = all;
      ParameterVector start = carry_over(all, energy_, obs_, &wide.fit);
      const StateLayout layout = build_layout(all);
      const std::pair<State, bool ModelSpec::*> factors[] = {{State::BetaC, &ModelSpec::tv_beta_C},
                                                             {State::BetaO, &ModelSpec::tv_beta_O},
                                                             {State::BetaG, &ModelSpec::tv_beta_G}};
      const Param consts[] = {Param::BetaC, Param::BetaO, Param::BetaG};
      for (int i = 0; i < 3; ++i) {
        const Smoothed s = smoothed_stats(wide.smooth, layout.index(factors[i].first));
        const std::string name(to_string(factors[i].first));
        if (is_flat(s, cfg_.thresholds)) {
          reduced.*(factors[i].second) = false;
          start[consts[i]] = s.mean;
          add("A", "flatness(" + name + ")", s.range, std::nan(""), "almost constant; reset", "-tv_" + name);
        } else {
          add("A", "flatness(" + name + ")", s.range, std::nan(""), "time-varying; keep", fmt_flat(s));
        }
      }
      if (reduced == cur_.fit.spec) {
        add("A", "spec", std::nan(""), std::nan(""), "no change after reset; stop", "");
        return;
      }
      if (reduced == all) {
        cur_ = std::move(wide);
      } else {
        for (const auto& fp : free_parameters(reduced)) {
          const int k = wide.fit.index_of(fp.name);
          if (k >= 0) set(start, fp.ref, get(wide.fit.params, wide.fit.free[static_cast<std::size_t>(k)].ref));
        }
        cur_ = refit(reduced, start, energy_, obs_, cfg_);
        add("A", "fit", cur_.fit.loglik, std::nan(""), "refit after reset", "");
      }
      if (std::find(seen.begin(), seen.end(), reduced) != seen.end()) {
        add("A", "spec", std::nan(""), std::nan(""), "specification repeats; stop", "");
        return;
      }
      seen.push_back(reduced);
    }
    // Final check after the last round.
    lb_rejects("A", Observable::Emissions);
  }

  void step_drift(const std::string& step, Observable o, State drift) {
    current_step_ = step;
    if (std::find(cur_.fit.filter.observables.begin(), cur_.fit.filter.observables.end(), o) ==
        cur_.fit.filter.observables.end()) {
      return;
    }
    if (!lb_rejects(step, o)) return;
    ModelSpec trial = cur_.fit.spec;
    bool ModelSpec::*flag = drift == State::DR ? &ModelSpec::ll_R : &ModelSpec::ll_beta_Y;
    const std::string name = drift == State::DR ? "ll_R" : "ll_beta_Y";
    trial.*flag = true;
    Fitted f = fit_spec(trial, cur_.fit);
    add(step, "fit", f.fit.loglik, std::nan(""), "stochastic drift", "+" + name);
    const Smoothed s = smoothed_stats(f.smooth, build_layout(trial).index(drift));
    if (is_flat(s, cfg_.thresholds)) {
      add(step, "flatness(" + std::string(to_string(drift)) + ")", s.range, std::nan(""),
          "almost constant; revert", "-" + name);
      return;
    }
    add(step, "flatness(" + std::string(to_string(drift)) + ")", s.range, std::nan(""), "time-varying; keep",
        fmt_flat(s));
    cur_ = std::move(f);
  }

  void step_d() {
    current_step_ = "D";
    std::vector<Observable> exhausted;
    while (true) {
      const auto& filt = cur_.fit.filter;
      double joint = 0.0;
      int dof = 0;
      Observable worst = filt.observables.front();
      double worst_p = 2.0;
      for (Observable o : filt.observables) {
        const TestResult r = jarque_bera(filt.standardized_series(o, true));
        add("D", "jarque_bera(" + std::string(to_string(o)) + ")", r.statistic, r.p_value, "", "");
        joint += r.statistic;
        dof += 2;
        const bool avail = std::find(exhausted.begin(), exhausted.end(), o) == exhausted.end();
        if (avail && r.p_value < worst_p) {
          worst_p = r.p_value;
          worst = o;
        }
      }
      const double p = chi2_upper(joint, dof);
      std::vector<double> ps{p};
      SelectionThresholds th = cfg_.thresholds;
      th.lags = {0};
      const bool rej = rejects(ps, th);
      add("D", "jarque_bera(joint)", joint, p, rej ? "reject" : "accept", "");
      if (!rej) return;
      if (worst_p > 1.0) {
        add("D", "dummy", std::nan(""), std::nan(""), "dummy cap reached; stop", "");
        return;
      }
      DummySpec d;
      d.target = worst;
      d.year = spike_year(worst);
      int count = 0;
      for (const auto& x : cur_.fit.spec.dummies) count += x.target == worst;
      d.placement = count % 2 == 0 ? Placement::Measurement : Placement::State;
      ModelSpec trial = cur_.fit.spec;
      const auto has = [&](const DummySpec& x) {
        return std::find(trial.dummies.begin(), trial.dummies.end(), x) != trial.dummies.end();
      };
      if (has(d)) d.placement = d.placement == Placement::Measurement ? Placement::State : Placement::Measurement;
      if (count >= cfg_.thresholds.max_dummies_per_observable || has(d)) {
        exhausted.push_back(worst);
        add("D", "dummy", std::nan(""), std::nan(""), "no dummy slot left for " + std::string(to_string(worst)), "");
        continue;
      }
      trial.dummies.push_back(d);
      ParameterVector start = carry_over(trial, energy_, obs_, &cur_.fit);
      cur_ = refit(trial, start, energy_, obs_, cfg_);
      add("D", "fit", cur_.fit.loglik, std::nan(""), "add dummy", "+" + d.name());
    }
  }

  int spike_year(Observable o) const {
    const auto& f = cur_.fit.filter;
    const int k = f.observable_index(o);
    std::size_t best = static_cast<std::size_t>(std::max(f.burn_in, 0));
    double m = -1.0;
    for (std::size_t t = best; t < f.size(); ++t) {
      const double a = std::abs(f.standardized[t][k]);
      if (a > m) {
        m = a;
        best = t;
      }
    }
    return f.years[best];
  }

  const EnergySeries& energy_;
  const ObservationSeries& obs_;
  const SelectionConfig& cfg_;
  Fitted cur_;
  SelectionTrace trace_;
  std::string current_step_ = "0";
};

std::string num(double v) { return format_number(v); }

}  // namespace

bool rejects(const std::vector<double>& p_values, const SelectionThresholds& th) {
  bool any = false, all = true;
  for (double p : p_values) {
    for (double level : th.levels) {
      const bool r = p < level;
      any = any || r;
      all = all && r;
    }
  }
  return th.rule == RejectRule::Any ? any : (all && !p_values.empty());
}

SelectionTrace select_model(const EnergySeries& energy, const ObservationSeries& obs, const SelectionConfig& config) {
  ModelSpec base;
  check_alignment(base, energy, obs);
  return Runner(energy, obs, config).run();
}

Json SelectionTrace::to_json() const {
  Json j;
  auto arr = Json::array();
  for (const auto& e : entries) {
    arr.push_back({{"step", e.step},
                   {"test", e.test},
                   {"statistic", json_number(e.statistic)},
                   {"p_value", json_number(e.p_value)},
                   {"decision", e.decision},
                   {"spec_delta", e.spec_delta}});
  }
  j["entries"] = std::move(arr);
  j["final_spec"] = spec_to_json(final_spec);
  j["final_params"] = params_to_json(final_spec, final_params);
  j["final_loglik"] = json_number(final_loglik);
  j["failed"] = failed;
  j["failure"] = failure;
  return j;
}

std::string SelectionTrace::to_text() const {
  std::ostringstream os;
  for (const auto& e : entries) {
    os << '[' << e.step << "] " << e.test;
    if (std::isfinite(e.statistic)) os << " stat=" << num(e.statistic);
    if (std::isfinite(e.p_value)) os << " p=" << num(e.p_value);
    if (!e.decision.empty()) os << " -> " << e.decision;
    if (!e.spec_delta.empty()) os << " (" << e.spec_delta << ')';
    os << '\n';
  }
  os << "final: " << spec_to_json(final_spec).dump() << '\n';
  if (failed) os << "FAILED: " << failure << '\n';
  return os.str();
}

}  // namespace e3s2
