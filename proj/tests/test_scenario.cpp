#include "doctest.h"

#include "e3s2/scenario.hpp"
#include "e3s2/synthetic.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace e3s2;

namespace {

// Decadal pathway 2020..2100 with declining fossil use.
ScenarioPathway decadal_pathway() {
  ScenarioPathway p;
  p.scenario_id = "test";
  for (int k = 0; k < 9; ++k) {
    p.years.push_back(2020 + 10 * k);
    p.coal.push_back(900.0 - 90.0 * k);
    p.oil.push_back(1800.0 - 150.0 * k);
    p.gas.push_back(1500.0 - 100.0 * k);
    p.nuclear.push_back(500.0 + 10.0 * k);
    p.renewables.push_back(600.0 + 120.0 * k);
    p.ccs.push_back(50.0 * k);
  }
  return p;
}

ScenarioPathway annual_pathway(int first, int n) {
  ScenarioPathway p;
  p.scenario_id = "annual";
  for (int k = 0; k < n; ++k) {
    p.years.push_back(first + k);
    p.coal.push_back(1000.0 - 5.0 * k);
    p.oil.push_back(2000.0 - 8.0 * k);
    p.gas.push_back(1500.0 + 2.0 * k);
    p.nuclear.push_back(400.0);
    p.renewables.push_back(300.0 + 12.0 * k);
  }
  return p;
}

// Exogenous-renewables anchor with no uncertainty at all.
ProjectionAnchor quiet_anchor() {
  ProjectionAnchor a;
  a.endogenous_R = false;
  a.theta_names = {"beta_C", "beta_O", "beta_G", "d_beta_Y"};
  a.theta = Eigen::Vector4d(3.9852, 2.6785, 2.3, 0.1075);
  a.omega = Eigen::MatrixXd::Zero(4, 4);
  a.beta_y_mean = 6.5;
  return a;
}

// Endogenous-renewables anchor with parameter and sampling uncertainty.
ProjectionAnchor noisy_anchor() {
  ProjectionAnchor a;
  a.theta_names = {"beta_C", "beta_O", "beta_G", "d_beta_Y", "d_R"};
  a.theta.resize(5);
  a.theta << 3.9852, 2.6785, 2.3, 0.1075, 12.0;
  a.omega = Eigen::MatrixXd::Zero(5, 5);
  a.omega.diagonal() << 0.04, 0.01, 0.09, 0.0004, 4.0;
  a.omega(0, 1) = a.omega(1, 0) = 0.005;
  a.beta_y_mean = 6.5;
  a.beta_y_var = 0.01;
  a.r_mean = 600.0;
  a.r_var = 25.0;
  a.var_eta_E = 400.0;
  a.var_eta_Y = 900.0;
  a.var_eta_beta_Y = 0.0053;
  a.var_eta_R = 36.0;
  return a;
}

ProjectionAnchor geometric_anchor(double g, double beta0) {
  ProjectionAnchor a;
  a.variant = Variant::E3S2_G;
  a.endogenous_R = false;
  a.theta_names = {"beta_C", "beta_O", "beta_G", "g"};
  a.theta = Eigen::Vector4d(3.9852, 2.6785, 2.3, g);
  a.omega = Eigen::MatrixXd::Zero(4, 4);
  a.beta_y_mean = std::log(beta0);
  return a;
}

double width(const Band& b) { return b.p95 - b.p5; }

// Bootstrap SE of a statistic of the draws.
template <class Stat>
double bootstrap_se(const std::vector<double>& x, Stat stat, int reps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> s(static_cast<std::size_t>(reps)), y(x.size());
  for (auto& v : s) {
    for (auto& e : y) e = x[pick(rng)];
    std::sort(y.begin(), y.end());
    v = stat(y);
  }
  double m = 0, ss = 0;
  for (double v : s) m += v / reps;
  for (double v : s) ss += (v - m) * (v - m);
  return std::sqrt(ss / (reps - 1));
}

}  // namespace

TEST_CASE("degenerate anchor collapses the bands onto the deterministic path") {
  const ProjectionAnchor a = quiet_anchor();
  const ScenarioPathway p = decadal_pathway();
  ProjectionConfig cfg;
  cfg.n_draws = 500;
  const ProjectionBands b = project(a, p, cfg);
  CHECK(b.n_clamped == 0);
  CHECK_FALSE(b.omega_projected);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const ExogInput u = p.at(t);
    const Band& e = b.at("emissions", u.year);
    CHECK(e.p5 == e.p50);
    CHECK(e.p50 == e.p95);
    CHECK(e.p50 == 3.9852 * u.coal + 2.6785 * u.oil + 2.3 * u.gas - p.ccs[t]);
    const Band& y = b.at("gdp", u.year);
    CHECK(width(y) == 0.0);
    // Output in a pathway year sees productivity of the preceding year.
    const double beta = 6.5 + 0.1075 * (u.year - 2019 - 1);
    CHECK(y.p50 == doctest::Approx(beta * (u.non_renewable() + u.renewables)).epsilon(1e-12));
    CHECK(width(b.at("beta_Y", u.year)) == 0.0);
  }
  CHECK_THROWS_AS(b.at("renewables", 2020), std::out_of_range);
}

TEST_CASE("percentiles are ordered for every variable and year") {
  const ProjectionBands b = project(noisy_anchor(), decadal_pathway());
  CHECK(b.n_draws == 10000);
  CHECK(b.bands.size() == 4 * 9);
  for (const auto& x : b.bands) {
    INFO(x.variable << " " << x.year);
    CHECK(x.p5 <= x.p50);
    CHECK(x.p50 <= x.p95);
    CHECK(x.p5 < x.p95);
  }
}

TEST_CASE("CCS shifts emission percentiles exactly") {
  const ProjectionAnchor a = noisy_anchor();
  ScenarioPathway p = decadal_pathway();
  ProjectionConfig cfg;
  cfg.n_draws = 2000;
  cfg.subtract_ccs = false;
  const ProjectionBands gross = project(a, p, cfg);
  cfg.subtract_ccs = true;
  const ProjectionBands net = project(a, p, cfg);
  const std::vector<double> c0 = p.ccs;
  p.ccs[4] += 123.25;
  const ProjectionBands more = project(a, p, cfg);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const int y = p.years[t];
    const Band &g = gross.at("emissions", y), &n = net.at("emissions", y), &m = more.at("emissions", y);
    CHECK(n.p5 == g.p5 - c0[t]);
    CHECK(n.p50 == g.p50 - c0[t]);
    CHECK(n.p95 == g.p95 - c0[t]);
    CHECK(m.p5 == g.p5 - p.ccs[t]);
    CHECK(m.p50 == g.p50 - p.ccs[t]);
    CHECK(m.p95 == g.p95 - p.ccs[t]);
    const double shift = t == 4 ? 123.25 : 0.0;
    for (double d : {n.p5 - m.p5, n.p50 - m.p50, n.p95 - m.p95}) CHECK(d == doctest::Approx(shift).epsilon(1e-12));
    CHECK(gross.at("gdp", y).p50 == net.at("gdp", y).p50);
  }
}

TEST_CASE("no fossil fuels leaves only disturbances in emissions") {
  ProjectionAnchor a = quiet_anchor();
  ScenarioPathway p = decadal_pathway();
  std::fill(p.coal.begin(), p.coal.end(), 0.0);
  std::fill(p.oil.begin(), p.oil.end(), 0.0);
  std::fill(p.gas.begin(), p.gas.end(), 0.0);
  ProjectionConfig cfg;
  cfg.n_draws = 300;
  const ProjectionBands b = project(a, p, cfg);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const ExogInput u = p.at(t);
    CHECK(b.at("emissions", u.year).p50 == -p.ccs[t]);
    const double beta = 6.5 + 0.1075 * (u.year - 2020);
    CHECK(b.at("gdp", u.year).p50 == doctest::Approx(beta * (u.nuclear + u.renewables)).epsilon(1e-12));
  }
  a.var_eta_E = 100.0;
  a.omega(0, 0) = 1.0;
  const ProjectionBands n = project(a, p, cfg);
  for (std::size_t t = 0; t < p.size(); ++t) {
    CHECK(n.at("emissions", p.years[t]).p50 + p.ccs[t] <= 3.0 * std::sqrt(100.0 / 300.0) * 1.2533);
  }
}

TEST_CASE("doubling the productivity disturbance never narrows the output band") {
  ProjectionAnchor a = noisy_anchor();
  const ScenarioPathway p = decadal_pathway();
  ProjectionConfig cfg;
  cfg.seed = 17;
  cfg.keep_draws = true;
  const ProjectionBands one = project(a, p, cfg);
  a.var_eta_beta_Y *= 2.0;
  const ProjectionBands two = project(a, p, cfg);
  const auto& draws = one.draws.at("gdp").back();
  const double se = bootstrap_se(draws, [](const std::vector<double>& s) {
    return hazen_percentile(s, 0.95) - hazen_percentile(s, 0.05);
  }, 200, 3);
  const double w1 = width(one.at("gdp", 2100)), w2 = width(two.at("gdp", 2100));
  INFO("widths " << w1 << " " << w2 << " se " << se);
  CHECK(w2 >= w1 - 2.0 * se);
  CHECK(w2 > w1);
}

TEST_CASE("geometric growth in productivity") {
  const ScenarioPathway p = annual_pathway(2020, 80);
  ProjectionConfig cfg;
  cfg.n_draws = 50;
  const ProjectionBands b = project_geometric(geometric_anchor(0.019, 6.5), p, cfg);
  double worst = 0.0;
  for (int h = 1; h <= 80; ++h) {
    const Band& x = b.at("beta_Y", 2019 + h);
    CHECK(x.p5 == x.p95);
    worst = std::max(worst, testing::rel_err(x.p50, 6.5 * std::exp(0.019 * h)));
  }
  CHECK(worst <= 1e-10);

  const ProjectionBands flat = project_geometric(geometric_anchor(0.0, 6.5), p, cfg);
  const double b0 = flat.at("beta_Y", 2020).p50;
  CHECK(b0 == doctest::Approx(6.5).epsilon(1e-14));
  for (int h = 1; h <= 80; ++h) CHECK(flat.at("beta_Y", 2019 + h).p50 == b0);

  CHECK_THROWS_AS(project_geometric(quiet_anchor(), p, cfg), SpecError);
}

TEST_CASE("median of geometric productivity follows the lognormal median") {
  ProjectionAnchor a = geometric_anchor(0.019, 6.5);
  a.var_eta_beta_Y = 1e-4;
  const ScenarioPathway p = annual_pathway(2020, 80);
  const ProjectionBands b = project_geometric(a, p);
  for (int h : {10, 40, 80}) {
    const double m = 6.5 * std::exp(0.019 * h);
    const double s = std::sqrt(h * 1e-4);
    // Asymptotic SE of a sample median: 0.5 / (f(m) sqrt(n)), f(m) = 1 / (m s sqrt(2 pi)).
    const double se = 0.5 * m * s * std::sqrt(2.0 * M_PI) / std::sqrt(10000.0);
    INFO("h " << h);
    CHECK(std::abs(b.at("beta_Y", 2019 + h).p50 - m) <= 2.0 * se);
  }
}

TEST_CASE("median converges with the number of draws") {
  const ProjectionAnchor a = noisy_anchor();
  const ScenarioPathway p = decadal_pathway();
  ProjectionConfig cfg;
  cfg.keep_draws = true;
  const ProjectionBands small = project(a, p, cfg);
  cfg.n_draws = 40000;
  cfg.keep_draws = false;
  cfg.seed = 99;
  cfg.jobs = 4;
  const ProjectionBands large = project(a, p, cfg);
  const double se = bootstrap_se(small.draws.at("gdp").back(),
                                 [](const std::vector<double>& s) { return hazen_percentile(s, 0.5); }, 200, 5);
  const double d = std::abs(small.at("gdp", 2100).p50 - large.at("gdp", 2100).p50);
  INFO("diff " << d << " se " << se);
  CHECK(d < 3.0 * se);
}

TEST_CASE("projection is deterministic and independent of the thread count") {
  const ProjectionAnchor a = noisy_anchor();
  const ScenarioPathway p = decadal_pathway();
  ProjectionConfig cfg;
  cfg.n_draws = 3000;
  cfg.seed = 8;
  std::ostringstream x, y, z;
  project(a, p, cfg).write_csv(x);
  project(a, p, cfg).write_csv(y);
  cfg.jobs = 3;
  project(a, p, cfg).write_csv(z);
  CHECK(x.str() == y.str());
  CHECK(x.str() == z.str());
  cfg.seed = 9;
  std::ostringstream w;
  project(a, p, cfg).write_csv(w);
  CHECK(w.str() != x.str());
  CHECK(x.str().rfind("year,variable,p5,p50,p95\n", 0) == 0);
}

TEST_CASE("non-PSD covariance and negative factors are handled with warnings") {
  ProjectionAnchor a = quiet_anchor();
  a.omega(0, 0) = 1.0;
  a.omega(1, 1) = 1.0;
  a.omega(0, 1) = a.omega(1, 0) = 2.0;
  ProjectionConfig cfg;
  cfg.n_draws = 1000;
  const ProjectionBands b = project(a, decadal_pathway(), cfg);
  CHECK(b.omega_projected);
  CHECK_FALSE(b.warnings.empty());

  ProjectionAnchor c = quiet_anchor();
  c.theta[2] = 0.1;
  c.omega(2, 2) = 1.0;
  const ProjectionBands k = project(c, decadal_pathway(), cfg);
  // P(N(0.1, 1) < 0) is about 0.46.
  CHECK(k.n_clamped > 400);
  CHECK(k.n_clamped < 520);
  CHECK_FALSE(k.warnings.empty());
  CHECK(k.to_json()["n_clamped"] == k.n_clamped);
}

TEST_CASE("pathway validation and loading") {
  ScenarioPathway p = decadal_pathway();
  p.years[3] = p.years[2];
  CHECK_THROWS_AS(p.validate(), DataError);
  p = decadal_pathway();
  p.gas[1] = -1.0;
  CHECK_THROWS_AS(p.validate(), DataError);
  p = decadal_pathway();
  p.ccs.pop_back();
  CHECK_THROWS_AS(p.validate(), DataError);
  CHECK_THROWS_AS(project(quiet_anchor(), annual_pathway(2019, 5)), DataError);

  testing::TempDir dir("scenario");
  const auto path = dir.path() / "NZE.csv";
  std::ofstream(path) << "year,coal,oil,gas,nuclear,renewables,ccs\n"
                         "2020,100,200,150,50,60,0\n2030,80,180,140,55,90,5\n2035,60,150,120,60,130,10\n"
                         "2040,40,120,100,65,170,20\n2050,10,60,50,70,260,40\n";
  const ScenarioPathway n = load_pathway_csv(path);
  CHECK(n.scenario_id == "NZE");
  CHECK(n.years == std::vector<int>{2020, 2030, 2035, 2040, 2050});
  CHECK(n.ccs.size() == 5);
  CHECK(n.gdp.empty());
  ProjectionAnchor a = quiet_anchor();
  a.theta[3] = 0.0;
  ProjectionConfig cfg;
  cfg.n_draws = 10;
  const ProjectionBands b = project(a, n, cfg);
  CHECK(b.at("gdp", 2035).p50 == doctest::Approx(6.5 * (60 + 150 + 120 + 60 + 130)).epsilon(1e-14));
}

TEST_CASE("gap years accumulate drift linearly") {
  ProjectionAnchor a = quiet_anchor();
  ScenarioPathway p = decadal_pathway();
  p.years = {2020, 2030, 2035, 2040, 2050, 2060, 2070, 2085, 2100};
  ProjectionConfig cfg;
  cfg.n_draws = 5;
  const ProjectionBands b = project(a, p, cfg);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const ExogInput u = p.at(t);
    CHECK(b.at("beta_Y", u.year).p50 == doctest::Approx(6.5 + 0.1075 * (u.year - 2019)).epsilon(1e-12));
  }
}

TEST_CASE("Hazen percentiles") {
  const std::vector<double> x = {1, 2, 3, 4};
  CHECK(hazen_percentile(x, 0.5) == 2.5);
  CHECK(hazen_percentile(x, 0.05) == 1.0);
  CHECK(hazen_percentile(x, 0.95) == 4.0);
  CHECK(hazen_percentile(x, 0.25) == 1.5);
  CHECK(hazen_percentile({7.0}, 0.3) == 7.0);
  CHECK(std::isnan(hazen_percentile({}, 0.5)));
}

TEST_CASE("implied trend of productivity is exact on a linear scenario") {
  ScenarioPathway p = decadal_pathway();
  const double b0 = 6.2, d = 0.0831;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const ExogInput u = p.at(k);
    p.gdp.push_back((u.non_renewable() + u.renewables) * (b0 + d * (u.year - 2020)));
  }
  ImpliedTrendInput in;
  in.noise_var = 50.0;
  const ImpliedTrendResult r = implied_trend(p, in, TrendTarget::DBetaY);
  CHECK(std::abs(r.estimate - d) <= 1e-8);
  CHECK(r.stderr > 0);
  CHECK(std::isfinite(r.loglik));
}

TEST_CASE("implied trend of renewables is exact on a linear scenario") {
  ScenarioPathway p = annual_pathway(2020, 31);
  ImpliedTrendInput in;
  in.base_year = 2019;
  in.beta_y0 = 6.0;
  in.d_beta_y = 0.05;
  in.noise_var = 10.0;
  const double r0 = 310.0, d = 17.5;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const ExogInput u = p.at(k);
    const double s = 6.0 + 0.05 * (u.year - 2019);
    p.gdp.push_back(s * (u.non_renewable() + r0 + d * (u.year - 2020)));
  }
  const ImpliedTrendResult r = implied_trend(p, in, TrendTarget::DR);
  CHECK(std::abs(r.estimate - d) <= 1e-8);
  CHECK(to_string(TrendTarget::DR) == "d_R");
}

TEST_CASE("implied trend is homogeneous in scenario GDP") {
  ScenarioPathway p = decadal_pathway();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 40.0);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const ExogInput u = p.at(k);
    p.gdp.push_back((u.non_renewable() + u.renewables) * (6.0 + 0.09 * (u.year - 2020)) + z(rng));
  }
  ImpliedTrendInput in;
  in.noise_var = 1600.0;
  const double d1 = implied_trend(p, in, TrendTarget::DBetaY).estimate;
  for (double& g : p.gdp) g *= 2.0;
  in.beta_y0 *= 2.0;
  in.noise_var *= 4.0;
  const double d2 = implied_trend(p, in, TrendTarget::DBetaY).estimate;
  CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-8));
}

TEST_CASE("implied trend errors") {
  ScenarioPathway p = decadal_pathway();
  ImpliedTrendInput in;
  CHECK_THROWS_AS(implied_trend(p, in, TrendTarget::DBetaY), DataError);
  p.gdp.assign(p.size(), 1000.0);
  in.noise_var = 0.0;
  CHECK_THROWS_AS(implied_trend(p, in, TrendTarget::DBetaY), SpecError);
  in.noise_var = 1.0;
  for (auto* v : {&p.coal, &p.oil, &p.gas, &p.nuclear, &p.renewables}) std::fill(v->begin(), v->end(), 0.0);
  CHECK_THROWS_AS(implied_trend(p, in, TrendTarget::DBetaY), DataError);
}

TEST_CASE("harmonize a series to an anchor value") {
  CHECK(harmonize_series({2020, 2030}, {100, 200}, 2020, 50) == std::vector<double>{50, 100});
  const std::vector<int> years = {2019, 2020, 2030, 2040};
  const std::vector<double> v = {3.1, 3.7, 5.9, 8.3};
  CHECK(harmonize_series(years, v, 2020, 3.7) == v);
  const auto h = harmonize_series(years, v, 2020, 4.45);
  CHECK(h[1] == doctest::Approx(4.45).epsilon(1e-15));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(h[i] / h[1] - v[i] / v[1]) <= 1e-12);
  CHECK_THROWS_AS(harmonize_series(years, {0, 0, 1, 2}, 2019, 1.0), DataError);
  CHECK_THROWS_AS(harmonize_series(years, v, 2050, 1.0), DataError);
}

TEST_CASE("anchors from a historical fit") {
  auto make = [](const ModelSpec& s) {
    const SyntheticSetup set = oecd_setup(s, 49);
    const StateLayout L = build_layout(s);
    FitResult f;
    f.spec = s;
    f.params = set.params;
    f.free = free_parameters(s);
    const auto k = static_cast<Eigen::Index>(f.free.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(k, k) * 0.01;
    f.covariance.cov = m * m.transpose() + 1e-4 * Eigen::MatrixXd::Identity(k, k);
    f.filter = ekf_filter(s, L, set.params, set.energy,
                          simulate(s, L, set.params, set.energy, set.x0, 44).observations);
    return std::pair{f, ekf_smoother(f.filter)};
  };

  const ModelSpec base;
  const auto [f0, s0] = make(base);
  REQUIRE(s0.years.back() == 2019);
  const ProjectionAnchor a = build_anchor(f0, s0);
  CHECK(a.theta_names == std::vector<std::string>{"beta_C", "beta_O", "beta_G", "d_beta_Y", "d_R"});
  const int ic = f0.index_of("beta_C"), io = f0.index_of("beta_O");
  CHECK(a.theta[0] == f0.params[Param::BetaC]);
  CHECK(a.omega(0, 0) == f0.covariance.cov(ic, ic));
  CHECK(a.omega(0, 1) == f0.covariance.cov(ic, io));
  const StateLayout L0 = build_layout(base);
  std::vector<double> by;
  for (std::size_t t = s0.years.size() - 5; t < s0.years.size(); ++t) by.push_back(s0.mean[t][L0.index(State::BetaY)]);
  std::sort(by.begin(), by.end());
  CHECK(a.beta_y_mean == by[2]);
  CHECK(a.var_eta_beta_Y == f0.params[Param::VarEtaBetaY]);

  ModelSpec tg;
  tg.tv_beta_G = true;
  const auto [f1, s1] = make(tg);
  const ProjectionAnchor b = build_anchor(f1, s1);
  const int g = build_layout(tg).index(State::BetaG);
  CHECK(b.theta[2] == s1.mean.back()[g]);
  CHECK(b.omega(2, 2) == s1.cov.back()(g, g));
  CHECK(b.omega(0, 2) == 0.0);

  ModelSpec lb;
  lb.ll_beta_Y = true;
  const auto [f2, s2] = make(lb);
  const ProjectionAnchor c = build_anchor(f2, s2, 2017, 3);
  const int dy = build_layout(lb).index(State::DBetaY);
  std::vector<double> d;
  for (std::size_t t = s2.years.size() - 5; t < s2.years.size() - 2; ++t) d.push_back(s2.mean[t][dy]);
  std::sort(d.begin(), d.end());
  CHECK(c.theta[3] == d[1]);
  CHECK(c.anchor_year == 2017);

  CHECK_THROWS_AS(build_anchor(f0, s0, 2030), DataError);
  CHECK_THROWS_AS(build_anchor(f0, s0, 1973, 5), DataError);
  CHECK_THROWS_AS(build_anchor(f0, s0, 2019, 0), DataError);
  CHECK(a.to_json()["theta"]["d_R"] == a.theta[4]);
}
