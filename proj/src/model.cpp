#include "e3s2/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace e3s2 {

namespace {

constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "beta_C",          "beta_O",          "beta_G",          "d_beta_Y",    "d_R",
    "g",               "g2",              "phi",             "var_eta_E",   "var_eta_Y",
    "var_eta_beta_C",  "var_eta_beta_O",  "var_eta_beta_G",  "var_eta_beta_Y",
    "var_eta_R",       "var_eta_d_R",     "var_eta_d_beta_Y", "var_eps_E",  "var_eps_Y",
    "var_eps_R",       "var_eta_alpha",
};

constexpr std::array<std::string_view, kStateKinds> kStateNames = {
    "E", "Y", "beta_C", "beta_O", "beta_G", "beta_Y", "R", "d_R", "d_beta_Y", "alpha"};

void require(bool ok, const std::string& msg) {
  if (!ok) throw SpecError(msg);
}

void check_state(const StateLayout& layout, const Vec& x) {
  if (x.size() != layout.size()) {
    throw ModelError("state dimension " + std::to_string(x.size()) + " does not match layout size " +
                     std::to_string(layout.size()));
  }
  if (!x.allFinite()) throw ModelError("non-finite state");
}

void check_exog(const ExogInput& u) {
  if (!std::isfinite(u.coal) || !std::isfinite(u.oil) || !std::isfinite(u.gas) ||
      !std::isfinite(u.nuclear) || !std::isfinite(u.renewables)) {
    throw ModelError("non-finite exogenous energy in year " + std::to_string(u.year));
  }
}

int state_row(Observable target) {
  switch (target) {
    case Observable::Emissions: return static_cast<int>(State::E);
    case Observable::Gdp: return static_cast<int>(State::Y);
    case Observable::Renewables: return static_cast<int>(State::R);
  }
  return 0;
}

double growth_rate(const ModelSpec& spec, const ParameterVector& p, int year) {
  if (spec.two_stage_break && year >= *spec.two_stage_break) return p[Param::G2];
  return p[Param::G];
}

// Energy aggregate multiplying beta_Y in the output equation.
double energy_sum(const ModelSpec& spec, const StateLayout& layout, const Vec& x, const ExogInput& u) {
  if (spec.renewables_exogenous()) return u.non_renewable() + u.renewables;
  return u.non_renewable() + x[layout.index(State::DR)] + x[layout.index(State::R)];
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::E3S2 ? "e3s2" : "e3s2_g"; }

std::string_view to_string(Observable o) {
  switch (o) {
    case Observable::Emissions: return "emissions";
    case Observable::Gdp: return "gdp";
    case Observable::Renewables: return "renewables";
  }
  return "";
}

std::string_view to_string(Placement p) { return p == Placement::State ? "state" : "measurement"; }
std::string_view to_string(State s) { return kStateNames[static_cast<int>(s)]; }
std::string_view to_string(Param p) { return kParamNames[static_cast<int>(p)]; }

Variant variant_from_string(std::string_view s) {
  if (s == "e3s2" || s == "E3S2") return Variant::E3S2;
  if (s == "e3s2_g" || s == "E3S2_G" || s == "g" || s == "e3s2-g") return Variant::E3S2_G;
  throw SpecError("unknown variant '" + std::string(s) + "'");
}

Observable observable_from_string(std::string_view s) {
  if (s == "emissions" || s == "E") return Observable::Emissions;
  if (s == "gdp" || s == "Y") return Observable::Gdp;
  if (s == "renewables" || s == "R") return Observable::Renewables;
  throw SpecError("unknown observable '" + std::string(s) + "'");
}

Placement placement_from_string(std::string_view s) {
  if (s == "state" || s == "S") return Placement::State;
  if (s == "measurement" || s == "M") return Placement::Measurement;
  throw SpecError("unknown dummy placement '" + std::string(s) + "'");
}

Param param_from_string(std::string_view s) {
  for (int i = 0; i < kParamCount; ++i) {
    if (kParamNames[i] == s) return static_cast<Param>(i);
  }
  throw SpecError("unknown parameter '" + std::string(s) + "'");
}

bool is_variance(Param p) { return static_cast<int>(p) >= static_cast<int>(Param::VarEtaE); }

std::string DummySpec::name() const {
  return std::string("D_") + (placement == Placement::State ? "S" : "M") + "_" +
         std::string(to_string(target)) + "_" + std::to_string(year);
}

bool ModelSpec::is_pinned(Param p) const {
  return std::find(pinned.begin(), pinned.end(), p) != pinned.end();
}

void ModelSpec::validate() const {
  const bool any_tv = tv_beta_C || tv_beta_O || tv_beta_G;
  if (variant == Variant::E3S2_G) {
    require(!any_tv, "E3S2-g requires time-invariant conversion factors");
    require(!ll_beta_Y && !ll_R, "E3S2-g does not admit local linear trends");
    require(!emissions_only, "emissions_only applies to E3S2 only");
  } else {
    require(!two_stage_break, "two-stage growth requires the E3S2-g variant");
  }
  if (emissions_only) {
    require(!ll_beta_Y && !ll_R, "emissions_only spec cannot carry output or renewables trends");
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& d : dummies) {
    if (d.target == Observable::Renewables) {
      require(!renewables_exogenous() && !emissions_only,
              "renewables dummy requires endogenous renewables");
    }
    if (d.target == Observable::Gdp) require(!emissions_only, "gdp dummy in emissions_only spec");
    const auto key = std::make_tuple(static_cast<int>(d.target), static_cast<int>(d.placement), d.year);
    require(seen.insert(key).second, "duplicate dummy " + d.name());
  }
  for (Param p : pinned) {
    require(is_variance(p), "only variances can be pinned, got " + std::string(to_string(p)));
  }
}

void EnergySeries::validate() const {
  const std::size_t n = years.size();
  if (coal.size() != n || oil.size() != n || gas.size() != n || nuclear.size() != n ||
      renewables.size() != n) {
    throw DataError("energy series lengths differ from the year count");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (years[i] <= years[i - 1]) throw DataError("energy years not strictly increasing");
    if (years[i] - years[i - 1] != years[1] - years[0]) throw DataError("energy years not uniformly spaced");
  }
  for (const auto* s : {&coal, &oil, &gas, &nuclear, &renewables}) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite((*s)[i]) || (*s)[i] < 0) {
        throw DataError("energy value missing or negative in year " + std::to_string(years[i]));
      }
    }
  }
}

EnergySeries EnergySeries::slice(std::size_t first, std::size_t count) const {
  auto cut = [&](const auto& v) {
    return std::vector(v.begin() + static_cast<long>(first), v.begin() + static_cast<long>(first + count));
  };
  return {cut(years), cut(coal), cut(oil), cut(gas), cut(nuclear), cut(renewables)};
}

const std::vector<double>& ObservationSeries::series(Observable o) const {
  switch (o) {
    case Observable::Emissions: return emissions;
    case Observable::Gdp: return gdp;
    case Observable::Renewables: return renewables;
  }
  return emissions;
}

std::vector<double>& ObservationSeries::series(Observable o) {
  return const_cast<std::vector<double>&>(std::as_const(*this).series(o));
}

ObservationSeries ObservationSeries::slice(std::size_t first, std::size_t count) const {
  auto cut = [&](const auto& v) {
    if (v.empty()) return std::decay_t<decltype(v)>{};
    return std::decay_t<decltype(v)>(v.begin() + static_cast<long>(first),
                                     v.begin() + static_cast<long>(first + count));
  };
  return {cut(years), cut(emissions), cut(gdp), cut(renewables)};
}

StateLayout::StateLayout(std::vector<State> states) : states_(std::move(states)) {
  index_.fill(-1);
  for (std::size_t i = 0; i < states_.size(); ++i) index_[static_cast<int>(states_[i])] = static_cast<int>(i);
}

int StateLayout::index(State s) const {
  const int i = index_[static_cast<int>(s)];
  if (i < 0) throw ModelError("state " + std::string(to_string(s)) + " not in layout");
  return i;
}

std::string StateLayout::name(int i) const {
  const State s = state(i);
  return std::string(to_string(s));
}

double get(const ParameterVector& p, const ParamRef& r) {
  if (r.dummy >= 0) return p.dummies().at(static_cast<std::size_t>(r.dummy));
  return p[r.id];
}

void set(ParameterVector& p, const ParamRef& r, double value) {
  if (r.dummy >= 0) {
    p.dummies().at(static_cast<std::size_t>(r.dummy)) = value;
  } else {
    p[r.id] = value;
  }
}

std::vector<FreeParameter> free_parameters(const ModelSpec& spec) {
  std::vector<FreeParameter> out;
  auto level = [&](Param p) { out.push_back({{p, -1}, std::string(to_string(p)), false}); };
  auto variance = [&](Param p) {
    if (!spec.is_pinned(p)) out.push_back({{p, -1}, std::string(to_string(p)), true});
  };
  const bool endo_r = !spec.renewables_exogenous() && !spec.emissions_only;

  if (spec.variant == Variant::E3S2_G) {
    level(Param::BetaC);
    level(Param::BetaO);
    level(Param::BetaG);
    level(Param::G);
    if (spec.two_stage_break) level(Param::G2);
    level(Param::Phi);
  } else {
    if (!spec.tv_beta_C) level(Param::BetaC);
    if (!spec.tv_beta_O) level(Param::BetaO);
    if (!spec.tv_beta_G) level(Param::BetaG);
    if (!spec.emissions_only && !spec.ll_beta_Y) level(Param::DBetaY);
    if (endo_r && !spec.ll_R) level(Param::DR);
  }
  for (std::size_t i = 0; i < spec.dummies.size(); ++i) {
    out.push_back({{Param::BetaC, static_cast<int>(i)}, spec.dummies[i].name(), false});
  }
  variance(Param::VarEtaE);
  if (!spec.emissions_only) {
    variance(Param::VarEtaY);
    variance(Param::VarEtaBetaY);
  }
  if (spec.variant == Variant::E3S2) {
    if (spec.tv_beta_C) variance(Param::VarEtaBetaC);
    if (spec.tv_beta_O) variance(Param::VarEtaBetaO);
    if (spec.tv_beta_G) variance(Param::VarEtaBetaG);
    if (endo_r) variance(Param::VarEtaR);
    if (endo_r && spec.ll_R) variance(Param::VarEtaDR);
    if (spec.ll_beta_Y) variance(Param::VarEtaDBetaY);
  } else {
    variance(Param::VarEtaAlpha);
  }
  variance(Param::VarEpsE);
  if (!spec.emissions_only) variance(Param::VarEpsY);
  if (endo_r) variance(Param::VarEpsR);
  return out;
}

void validate_params(const ModelSpec& spec, const ParameterVector& params) {
  if (params.dummies().size() != spec.dummies.size()) {
    throw SpecError("parameter vector has " + std::to_string(params.dummies().size()) +
                    " dummy coefficients, spec has " + std::to_string(spec.dummies.size()));
  }
  for (const auto& fp : free_parameters(spec)) {
    const double v = get(params, fp.ref);
    if (!std::isfinite(v)) throw SpecError("non-finite parameter " + fp.name);
    if (fp.variance && v < 0) throw SpecError("negative variance " + fp.name);
  }
  if (spec.variant == Variant::E3S2_G && !(std::abs(params[Param::Phi]) < 1.0)) {
    throw SpecError("AR coefficient phi must satisfy |phi| < 1");
  }
}

StateLayout build_layout(const ModelSpec& spec) {
  spec.validate();
  if (spec.emissions_only) return StateLayout({State::E, State::BetaC, State::BetaO, State::BetaG});
  if (spec.variant == Variant::E3S2_G) {
    return StateLayout({State::E, State::Y, State::BetaC, State::BetaO, State::BetaG, State::BetaY, State::Alpha});
  }
  std::vector<State> s{State::E, State::Y, State::BetaC, State::BetaO, State::BetaG, State::BetaY};
  if (!spec.renewables_exogenous()) {
    s.push_back(State::R);
    s.push_back(State::DR);
  }
  s.push_back(State::DBetaY);
  return StateLayout(std::move(s));
}

std::vector<Observable> observables(const ModelSpec& spec) {
  if (spec.emissions_only) return {Observable::Emissions};
  if (spec.renewables_exogenous()) return {Observable::Emissions, Observable::Gdp};
  return {Observable::Emissions, Observable::Gdp, Observable::Renewables};
}

Vec transition(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
               const Vec& x, const ExogInput& u) {
  check_state(layout, x);
  check_exog(u);
  Vec out = x;  // random-walk rows keep their previous value
  const int e = layout.index(State::E);
  const int bc = layout.index(State::BetaC), bo = layout.index(State::BetaO), bg = layout.index(State::BetaG);
  out[e] = x[bc] * u.coal + x[bo] * u.oil + x[bg] * u.gas;

  if (!spec.emissions_only) {
    const int y = layout.index(State::Y);
    const int by = layout.index(State::BetaY);
    if (spec.variant == Variant::E3S2) {
      out[y] = x[by] * energy_sum(spec, layout, x, u);
      out[by] = x[by] + x[layout.index(State::DBetaY)];
      if (!spec.renewables_exogenous()) out[layout.index(State::R)] += x[layout.index(State::DR)];
    } else {
      out[y] = std::exp(x[by]) * energy_sum(spec, layout, x, u);
      out[by] = x[by] + growth_rate(spec, params, u.year);
      const int a = layout.index(State::Alpha);
      out[a] = params[Param::Phi] * x[a];
    }
  }

  for (std::size_t i = 0; i < spec.dummies.size(); ++i) {
    const auto& d = spec.dummies[i];
    if (d.placement == Placement::State && d.year == u.year) {
      out[layout.index(static_cast<State>(state_row(d.target)))] += params.dummies().at(i);
    }
  }
  return out;
}

Mat transition_jacobian(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                        const Vec& x, const ExogInput& u) {
  check_state(layout, x);
  check_exog(u);
  const int n = layout.size();
  Mat J = Mat::Identity(n, n);
  const int e = layout.index(State::E);
  J(e, e) = 0.0;
  J(e, layout.index(State::BetaC)) = u.coal;
  J(e, layout.index(State::BetaO)) = u.oil;
  J(e, layout.index(State::BetaG)) = u.gas;
  if (spec.emissions_only) return J;

  const int y = layout.index(State::Y);
  const int by = layout.index(State::BetaY);
  J(y, y) = 0.0;
  if (spec.variant == Variant::E3S2) {
    J(y, by) = energy_sum(spec, layout, x, u);
    if (!spec.renewables_exogenous()) {
      J(y, layout.index(State::R)) = x[by];
      J(y, layout.index(State::DR)) = x[by];
      J(layout.index(State::R), layout.index(State::DR)) = 1.0;
    }
    J(by, layout.index(State::DBetaY)) = 1.0;
  } else {
    J(y, by) = std::exp(x[by]) * energy_sum(spec, layout, x, u);
    const int a = layout.index(State::Alpha);
    J(a, a) = params[Param::Phi];
  }
  return J;
}

Mat disturbance_loading(const ModelSpec& spec, const StateLayout& layout, const Vec& x, const ExogInput& u) {
  check_state(layout, x);
  const int n = layout.size();
  Mat L = Mat::Identity(n, n);
  const int e = layout.index(State::E);
  L(e, layout.index(State::BetaC)) = u.coal;
  L(e, layout.index(State::BetaO)) = u.oil;
  L(e, layout.index(State::BetaG)) = u.gas;
  if (spec.variant == Variant::E3S2 && !spec.emissions_only && !spec.renewables_exogenous()) {
    L(layout.index(State::Y), layout.index(State::R)) = x[layout.index(State::BetaY)];
  }
  return L;
}

ObsVec measurement(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                   const Vec& x, int year) {
  check_state(layout, x);
  const auto obs = observables(spec);
  ObsVec z(static_cast<int>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int k = static_cast<int>(i);
    switch (obs[i]) {
      case Observable::Emissions:
        z[k] = x[layout.index(State::E)];
        if (layout.has(State::Alpha)) z[k] += x[layout.index(State::Alpha)];
        break;
      case Observable::Gdp: z[k] = x[layout.index(State::Y)]; break;
      case Observable::Renewables: z[k] = x[layout.index(State::R)]; break;
    }
  }
  for (std::size_t i = 0; i < spec.dummies.size(); ++i) {
    const auto& d = spec.dummies[i];
    if (d.placement != Placement::Measurement || d.year != year) continue;
    const auto it = std::find(obs.begin(), obs.end(), d.target);
    if (it != obs.end()) z[static_cast<int>(it - obs.begin())] += params.dummies().at(i);
  }
  return z;
}

ObsStateMat measurement_jacobian(const ModelSpec& spec, const StateLayout& layout) {
  const auto obs = observables(spec);
  ObsStateMat Z = ObsStateMat::Zero(static_cast<int>(obs.size()), layout.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const int k = static_cast<int>(i);
    switch (obs[i]) {
      case Observable::Emissions:
        Z(k, layout.index(State::E)) = 1.0;
        if (layout.has(State::Alpha)) Z(k, layout.index(State::Alpha)) = 1.0;
        break;
      case Observable::Gdp: Z(k, layout.index(State::Y)) = 1.0; break;
      case Observable::Renewables: Z(k, layout.index(State::R)) = 1.0; break;
    }
  }
  return Z;
}

NoiseCovariances noise_covariances(const ModelSpec& spec, const StateLayout& layout,
                                   const ParameterVector& params) {
  auto var = [&](Param p, bool structurally_free) {
    if (!structurally_free || spec.is_pinned(p)) return 0.0;
    const double v = params[p];
    if (!(v >= 0.0)) throw SpecError("negative or non-finite variance " + std::string(to_string(p)));
    return v;
  };
  const bool g = spec.variant == Variant::E3S2_G;
  const int n = layout.size();
  Mat Q = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double q = 0.0;
    switch (layout.state(i)) {
      case State::E: q = var(Param::VarEtaE, true); break;
      case State::Y: q = var(Param::VarEtaY, true); break;
      case State::BetaC: q = var(Param::VarEtaBetaC, !g && spec.tv_beta_C); break;
      case State::BetaO: q = var(Param::VarEtaBetaO, !g && spec.tv_beta_O); break;
      case State::BetaG: q = var(Param::VarEtaBetaG, !g && spec.tv_beta_G); break;
      case State::BetaY: q = var(Param::VarEtaBetaY, true); break;
      case State::R: q = var(Param::VarEtaR, true); break;
      case State::DR: q = var(Param::VarEtaDR, spec.ll_R); break;
      case State::DBetaY: q = var(Param::VarEtaDBetaY, spec.ll_beta_Y); break;
      case State::Alpha: q = var(Param::VarEtaAlpha, true); break;
    }
    Q(i, i) = q;
  }
  const auto obs = observables(spec);
  ObsMat H = ObsMat::Zero(static_cast<int>(obs.size()), static_cast<int>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Param p = obs[i] == Observable::Emissions ? Param::VarEpsE
                    : obs[i] == Observable::Gdp     ? Param::VarEpsY
                                                    : Param::VarEpsR;
    H(static_cast<int>(i), static_cast<int>(i)) = var(p, true);
  }
  return {Q, H};
}

}  // namespace e3s2
