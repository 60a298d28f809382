#include "doctest.h"

#include "e3s2/diagnostics.hpp"
#include "e3s2/filter.hpp"
#include "e3s2/synthetic.hpp"
#include "test_support.hpp"

#include <cmath>
#include <map>
#include <numeric>

using namespace e3s2;

TEST_CASE("EKF equals an exact linear Kalman filter and RTS smoother") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto li = testing::random_linear_instance(seed, 100);
    const FilterOutput f = ekf_filter(li.spec, li.layout, li.params, li.energy, li.obs, li.init);
    const SmootherOutput sm = ekf_smoother(f);
    const auto o = testing::linear_kalman(li.spec, li.layout, li.params, li.energy, li.obs, f.initial_mean,
                                          f.initial_cov, li.beta_y, f.burn_in);
    CHECK(std::abs(f.loglik - o.loglik) <= 1e-8 * std::max(1.0, std::abs(o.loglik)));
    double worst_f = 0, worst_s = 0;
    for (std::size_t t = 0; t < f.size(); ++t) {
      for (int i = 0; i < li.layout.size(); ++i) {
        worst_f = std::max(worst_f, testing::rel_err(f.filtered_mean[t][i], o.filtered[t][i]));
        worst_s = std::max(worst_s, testing::rel_err(sm.mean[t][i], o.smoothed[t][i]));
      }
    }
    CHECK(worst_f <= 1e-8);
    CHECK(worst_s <= 1e-8);
  }
}

TEST_CASE("EKF equals the exact filter with time-varying factors and drifts") {
  for (std::uint64_t seed = 11; seed <= 16; ++seed) {
    const auto li = testing::random_linear_instance(seed, 100, true);
    const FilterOutput f = ekf_filter(li.spec, li.layout, li.params, li.energy, li.obs, li.init);
    const SmootherOutput sm = ekf_smoother(f);
    const auto o = testing::linear_kalman(li.spec, li.layout, li.params, li.energy, li.obs, f.initial_mean,
                                          f.initial_cov, li.beta_y, f.burn_in);
    CHECK(std::abs(f.loglik - o.loglik) <= 1e-7 * std::max(1.0, std::abs(o.loglik)));
    double worst = 0;
    for (std::size_t t = 0; t < f.size(); ++t) {
      for (int i = 0; i < li.layout.size(); ++i) {
        worst = std::max(worst, testing::rel_err(f.filtered_mean[t][i], o.filtered[t][i]));
        worst = std::max(worst, testing::rel_err(sm.mean[t][i], o.smoothed[t][i]));
      }
    }
    CHECK(worst <= 1e-7);
  }
}

TEST_CASE("noiseless data are recovered by the filter") {
  ModelSpec s;
  SyntheticSetup set = oecd_setup(s, 40);
  ParameterVector p = set.params;
  for (int i = 0; i < kParamCount; ++i) {
    if (is_variance(static_cast<Param>(i))) p[static_cast<Param>(i)] = 0.0;
  }
  const StateLayout L = build_layout(s);
  const SimulationResult sim = simulate(s, L, p, set.energy, set.x0, 3);
  p[Param::VarEpsE] = p[Param::VarEpsY] = p[Param::VarEpsR] = 1e-10;
  InitSpec init;
  init.big_k = 1e2;
  const FilterOutput f = ekf_filter(s, L, p, set.energy, sim.observations, init);
  for (std::size_t t = 3; t < f.size(); ++t) {
    for (int i = 0; i < L.size(); ++i) {
      CHECK(testing::rel_err(f.filtered_mean[t][i], sim.states[t][i]) < 1e-6);
    }
  }
}

TEST_CASE("initial state") {
  ModelSpec s;
  s.tv_beta_O = true;
  const StateLayout L = build_layout(s);
  const SyntheticSetup set = oecd_setup(s, 20);
  const auto obs = simulate(s, L, set.params, set.energy, set.x0, 1).observations;
  const InitialState a = init_state(s, L, set.params, set.energy, obs);
  CHECK(a.cov(L.index(State::R), L.index(State::R)) == 1e6);
  CHECK(a.cov(L.index(State::BetaC), L.index(State::BetaC)) == 0.0);
  CHECK(a.mean[L.index(State::BetaC)] == set.params[Param::BetaC]);
  CHECK(a.mean[L.index(State::BetaO)] == kMarlandOil);
  CHECK(a.mean[L.index(State::E)] == obs.emissions[0]);
  CHECK(a.mean[L.index(State::Y)] == obs.gdp[0]);
  CHECK(a.mean[L.index(State::R)] == obs.renewables[0]);
  // beta_O, beta_Y and R* are diffuse and feed back into the recursion.
  CHECK(a.burn_in == 3);
  InitSpec big;
  big.big_k = 1e8;
  const InitialState b = init_state(s, L, set.params, set.energy, obs, big);
  CHECK(b.cov(L.index(State::R), L.index(State::R)) == 1e8);
  CHECK(b.cov(L.index(State::BetaO), L.index(State::BetaO)) == 1e8);
}

TEST_CASE("smoother properties") {
  ModelSpec s;
  s.tv_beta_G = true;
  s.ll_R = true;
  const SyntheticSetup set = oecd_setup(s, 49);
  const StateLayout L = build_layout(s);
  const auto obs = simulate(s, L, set.params, set.energy, set.x0, 17).observations;
  const FilterOutput f = ekf_filter(s, L, set.params, set.energy, obs);
  const SmootherOutput sm = ekf_smoother(f);
  CHECK(sm.mean.back() == f.filtered_mean.back());
  CHECK(sm.cov.back() == f.filtered_cov.back());
  for (std::size_t t = 0; t < f.size(); ++t) {
    for (int i = 0; i < L.size(); ++i) {
      CHECK(sm.cov[t](i, i) <= f.filtered_cov[t](i, i) * (1 + 1e-9) + 1e-12);
    }
  }
  double asym = 0.0;
  for (std::size_t t = 0; t < f.size(); ++t) {
    asym = std::max(asym, (f.filtered_cov[t] - f.filtered_cov[t].transpose()).cwiseAbs().maxCoeff());
    asym = std::max(asym, (f.predicted_cov[t] - f.predicted_cov[t].transpose()).cwiseAbs().maxCoeff());
  }
  CHECK(asym <= 1e-10);
}

TEST_CASE("simulation") {
  ModelSpec s;
  SyntheticSetup set = oecd_setup(s, 30);
  const StateLayout L = build_layout(s);
  ParameterVector p = set.params;
  for (int i = 0; i < kParamCount; ++i) {
    if (is_variance(static_cast<Param>(i))) p[static_cast<Param>(i)] = 0.0;
  }
  const SimulationResult sim = simulate(s, L, p, set.energy, set.x0, 5);
  Vec x = set.x0;
  apply_parameter_states(s, L, p, x);
  for (std::size_t t = 0; t < set.energy.size(); ++t) {
    x = transition(s, L, p, x, set.energy.at(t));
    const ObsVec y = measurement(s, L, p, x, set.energy.years[t]);
    CHECK(sim.observations.emissions[t] == y[0]);
    CHECK(sim.observations.gdp[t] == y[1]);
    CHECK(sim.observations.renewables[t] == y[2]);
  }

  const SimulationResult a = simulate(s, L, set.params, set.energy, set.x0, 42);
  const SimulationResult b = simulate(s, L, set.params, set.energy, set.x0, 42);
  CHECK(a.observations.emissions == b.observations.emissions);
  CHECK(a.observations.gdp == b.observations.gdp);

  // Measurement error variance over 10,000 draws.
  ModelSpec eo;
  eo.emissions_only = true;
  SyntheticSetup big = benchmark_setup(10000);
  const StateLayout Le = build_layout(eo);
  ParameterVector pe = big.params;
  pe[Param::VarEpsE] = 0.02;
  const SimulationResult r = simulate(eo, Le, pe, big.energy, big.x0, 8);
  double ss = 0.0, mean = 0.0;
  const std::size_t n = big.energy.size();
  std::vector<double> err(n);
  for (std::size_t t = 0; t < n; ++t) {
    err[t] = r.observations.emissions[t] - r.states[t][Le.index(State::E)];
    mean += err[t] / static_cast<double>(n);
  }
  for (double e : err) ss += (e - mean) * (e - mean);
  CHECK(ss / static_cast<double>(n - 1) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("log-likelihood is stable in the diffuse constant") {
  ModelSpec s;
  s.tv_beta_G = true;
  const SyntheticSetup set = oecd_setup(s, 49);
  const StateLayout L = build_layout(s);
  const auto obs = simulate(s, L, set.params, set.energy, set.x0, 9).observations;
  InitSpec k8;
  k8.big_k = 1e8;
  const double a = ekf_filter(s, L, set.params, set.energy, obs).loglik;
  const double b = ekf_filter(s, L, set.params, set.energy, obs, k8).loglik;
  CHECK(std::abs(a - b) < 1e-4);
  CHECK(log_likelihood(s, L, set.params, set.energy, obs) == a);
}

TEST_CASE("standardized innovations at the true parameters") {
  ModelSpec s;
  s.tv_beta_G = true;
  s.ll_R = true;
  const SyntheticSetup set = oecd_setup(s, 500);
  const StateLayout L = build_layout(s);
  const auto obs = simulate(s, L, set.params, set.energy, set.x0, 21).observations;
  const FilterOutput f = ekf_filter(s, L, set.params, set.energy, obs);
  for (Observable o : f.observables) {
    const Moments m = moments(f.standardized_series(o));
    CHECK(std::abs(m.mean) <= 0.1);
    CHECK(m.std >= 0.85);
    CHECK(m.std <= 1.15);
  }
}

TEST_CASE("innovations at the truth are white in most replications") {
  ModelSpec s;
  s.tv_beta_G = true;
  s.ll_R = true;
  s.dummies = {{Observable::Emissions, Placement::Measurement, 2009}};
  SyntheticSetup set = oecd_setup(s, 49);
  set.params.dummies() = {0.3};
  const StateLayout L = build_layout(s);
  const int reps = 200;
  std::map<Observable, int> pass;
  for (int r = 0; r < reps; ++r) {
    const auto obs = simulate(s, L, set.params, set.energy, set.x0, 1000 + static_cast<std::uint64_t>(r)).observations;
    const FilterOutput f = ekf_filter(s, L, set.params, set.energy, obs);
    REQUIRE(std::isfinite(f.loglik));
    for (Observable o : f.observables) pass[o] += ljung_box(f.standardized_series(o), 5).p_value >= 0.05;
  }
  for (const auto& [o, n] : pass) {
    INFO(to_string(o));
    CHECK(n >= 0.9 * reps);
  }
}

TEST_CASE("singular innovation covariance names the time step") {
  ModelSpec s;
  s.emissions_only = true;
  const SyntheticSetup set = benchmark_setup(10);
  const StateLayout L = build_layout(s);
  ParameterVector p = set.params;
  p[Param::VarEpsE] = 0.0;
  const auto obs = simulate(s, L, set.params, set.energy, set.x0, 1).observations;
  try {
    ekf_filter(s, L, p, set.energy, obs);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.step() == 0);
  }
  CHECK(std::isinf(log_likelihood(s, L, p, set.energy, obs)));
}

TEST_CASE("misaligned data are rejected") {
  ModelSpec s;
  const SyntheticSetup set = oecd_setup(s, 10);
  const StateLayout L = build_layout(s);
  auto obs = simulate(s, L, set.params, set.energy, set.x0, 1).observations;
  auto bad = obs;
  bad.years[3] += 1;
  CHECK_THROWS_AS(ekf_filter(s, L, set.params, set.energy, bad), DataError);
  bad = obs;
  bad.gdp[2] = NAN;
  CHECK_THROWS_AS(ekf_filter(s, L, set.params, set.energy, bad), DataError);
}
