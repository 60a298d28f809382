#include "e3s2/synthetic.hpp"

#include "e3s2/json_io.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace e3s2 {

namespace {

double wiggle(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return std::clamp(n(rng), -3.0, 3.0);
}

}  // namespace

EnergySeries synthetic_energy(int n, RegionScale scale, std::uint64_t seed, int first_year) {
  if (n < 1) throw ModelError("series length must be positive");
  std::mt19937_64 rng(seed);
  const double s = scale == RegionScale::OecdLike ? 1.0 : 0.1;
  const double coal_level = scale == RegionScale::OecdLike ? 1.0 : 0.05;
  const double renew_level = scale == RegionScale::OecdLike ? 0.3 : 0.1;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  EnergySeries e;
  for (int t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    e.years.push_back(first_year + t);
    e.coal.push_back(coal_level * (1.0 + 0.15 * std::sin(two_pi * x / 37.0) + 0.02 * wiggle(rng)));
    e.oil.push_back(s * (2.0 + 0.2 * std::sin(two_pi * x / 23.0 + 1.0) + 0.03 * wiggle(rng)));
    e.gas.push_back(s * (0.7 + 0.5 * (1.0 - std::exp(-x / 40.0)) + 0.1 * std::sin(two_pi * x / 17.0) +
                         0.02 * wiggle(rng)));
    e.nuclear.push_back(s * (0.1 + 0.4 * (1.0 - std::exp(-x / 20.0))));
    e.renewables.push_back(renew_level * (1.0 + 1.0 * (1.0 - std::exp(-x / 60.0))));
  }
  return e;
}

Vec start_state(const ModelSpec& spec, const ParameterVector& params, const EnergySeries& energy, double beta_y0,
                double r0, double d_r0, double d_beta_y0) {
  const StateLayout layout = build_layout(spec);
  const ExogInput u = energy.at(0);
  Vec x = Vec::Zero(layout.size());
  auto put = [&](State s, double v) {
    if (layout.has(s)) x[layout.index(s)] = v;
  };
  put(State::BetaC, params[Param::BetaC]);
  put(State::BetaO, params[Param::BetaO]);
  put(State::BetaG, params[Param::BetaG]);
  put(State::E, params[Param::BetaC] * u.coal + params[Param::BetaO] * u.oil + params[Param::BetaG] * u.gas);
  const bool g = spec.variant == Variant::E3S2_G;
  put(State::BetaY, g ? std::log(beta_y0) : beta_y0);
  const double sum = u.non_renewable() + (spec.renewables_exogenous() ? u.renewables : r0);
  put(State::Y, beta_y0 * sum);
  put(State::R, r0);
  put(State::DR, d_r0);
  put(State::DBetaY, d_beta_y0);
  return x;
}

SyntheticSetup oecd_setup(const ModelSpec& spec, int n, std::uint64_t energy_seed) {
  SyntheticSetup s;
  s.spec = spec;
  s.energy = synthetic_energy(n, RegionScale::OecdLike, energy_seed);
  auto& p = s.params;
  p.dummies().assign(spec.dummies.size(), 0.0);
  p[Param::BetaC] = 3.9852;
  p[Param::BetaO] = 2.6785;
  p[Param::BetaG] = kMarlandGas;
  p[Param::DBetaY] = 0.1075;
  p[Param::DR] = 0.005;
  p[Param::VarEtaE] = 0.01;
  p[Param::VarEpsE] = 0.01;
  p[Param::VarEtaY] = 0.1;
  p[Param::VarEpsY] = 0.1;
  p[Param::VarEpsR] = 1e-5;
  p[Param::VarEtaBetaY] = 0.0053;
  p[Param::VarEtaR] = 3.6e-5;
  p[Param::VarEtaBetaC] = 1e-3;
  p[Param::VarEtaBetaO] = 1e-3;
  p[Param::VarEtaBetaG] = 1e-3;
  p[Param::VarEtaDR] = 1e-6;
  p[Param::VarEtaDBetaY] = 1e-4;
  s.x0 = start_state(spec, p, s.energy, 6.0, 0.3, p[Param::DR], p[Param::DBetaY]);
  return s;
}

SyntheticSetup lam_setup(int n, std::uint64_t energy_seed) {
  SyntheticSetup s;
  s.spec.tv_beta_C = true;
  s.energy = synthetic_energy(n, RegionScale::LamLike, energy_seed);
  auto& p = s.params;
  p[Param::BetaC] = kMarlandCoal;
  p[Param::BetaO] = 3.3775;
  p[Param::BetaG] = 2.3005;
  p[Param::DBetaY] = 0.0196;
  p[Param::DR] = 0.0032;
  p[Param::VarEtaE] = 1e-4;
  p[Param::VarEpsE] = 1e-4;
  p[Param::VarEtaBetaC] = 1e-3;
  p[Param::VarEtaY] = 1e-3;
  p[Param::VarEpsY] = 1e-3;
  p[Param::VarEtaBetaY] = 1e-3;
  p[Param::VarEtaR] = 1e-6;
  p[Param::VarEpsR] = 1e-6;
  s.x0 = start_state(s.spec, p, s.energy, 8.0, 0.1, p[Param::DR], p[Param::DBetaY]);
  return s;
}

SyntheticSetup benchmark_setup(int n, std::uint64_t energy_seed) {
  SyntheticSetup s;
  s.spec.emissions_only = true;
  s.spec.pinned = {Param::VarEtaE};
  s.energy = synthetic_energy(n, RegionScale::OecdLike, energy_seed);
  auto& p = s.params;
  p[Param::BetaC] = kMarlandCoal;
  p[Param::BetaO] = kMarlandOil;
  p[Param::BetaG] = kMarlandGas;
  p[Param::VarEpsE] = 0.02;
  s.x0 = start_state(s.spec, p, s.energy, 1.0, 0.0, 0.0, 0.0);
  return s;
}

SyntheticSetup geometric_setup(int n, std::uint64_t energy_seed) {
  SyntheticSetup s;
  s.spec.variant = Variant::E3S2_G;
  s.energy = synthetic_energy(n, RegionScale::OecdLike, energy_seed);
  auto& p = s.params;
  p[Param::BetaC] = 3.9852;
  p[Param::BetaO] = 2.6785;
  p[Param::BetaG] = kMarlandGas;
  p[Param::G] = 0.019;
  p[Param::Phi] = 0.5;
  p[Param::VarEtaE] = 0.01;
  p[Param::VarEpsE] = 0.01;
  p[Param::VarEtaY] = 0.1;
  p[Param::VarEpsY] = 0.1;
  p[Param::VarEtaBetaY] = 1e-5;
  p[Param::VarEtaAlpha] = 0.005;
  s.x0 = start_state(s.spec, p, s.energy, 6.0, 0.0, 0.0, 0.0);
  return s;
}

void write_fixture_dataset(const std::filesystem::path& dir, const SyntheticSetup& setup, std::uint64_t seed) {
  const StateLayout layout = build_layout(setup.spec);
  const SimulationResult sim = simulate(setup.spec, layout, setup.params, setup.energy, setup.x0, seed);
  const auto& e = setup.energy;
  const auto& o = sim.observations;
  const bool endo = !setup.spec.renewables_exogenous();
  struct Country {
    const char* iso3;
    double share;
    double ppp;
  };
  const Country countries[] = {{"BRA", 0.6, 2.5}, {"MEX", 0.4, 9.0}, {"ABW", 0.001, 1.8}};
  auto deflator = [](int year) { return 100.0 * std::pow(1.03, year - 2005); };
  auto num = [](double v) { return format_number(v); };

  std::ostringstream energy, obs;
  energy << "iso3,year,coal,oil,gas,nuclear,renewables,unit\n";
  obs << "iso3,year,emissions,gdp_lcu,ppp,deflator\n";
  for (const auto& c : countries) {
    for (std::size_t t = 0; t < e.size(); ++t) {
      const double k = 1000.0 * c.share;  // Gtoe -> mtoe, Gt -> Mt, trillion -> billion
      const double renew = endo ? o.renewables[t] : e.renewables[t];
      energy << c.iso3 << ',' << e.years[t] << ',' << num(k * e.coal[t]) << ',' << num(k * e.oil[t]) << ','
             << num(k * e.gas[t]) << ',' << num(k * e.nuclear[t]) << ',' << num(k * renew) << ",mtoe\n";
      const double real_bn = k * o.gdp[t];
      const double lcu = real_bn * 1e9 * c.ppp * deflator(e.years[t]) / deflator(2005);
      obs << c.iso3 << ',' << e.years[t] << ',' << num(k * o.emissions[t]) << ',' << num(lcu) << ','
          << num(c.ppp) << ',' << num(deflator(e.years[t])) << '\n';
    }
  }
  write_text(dir / "energy.csv", energy.str());
  write_text(dir / "observations.csv", obs.str());
  write_text(dir / "regions.csv", "region,iso3\nLAM,BRA\nLAM,MEX\nLAM,ABW\n");
  write_text(dir / "excluded.csv", "iso3\nABW\n");
}

}  // namespace e3s2
