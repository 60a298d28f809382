#pragma once

// State-space structure of the energy-economy-emissions model (E3S2) and its
// geometric-growth variant (E3S2-g).
//
// Every state in the layout is carried explicitly. Conversion factors and
// drifts that are not time-varying keep their slot with zero disturbance
// variance and zero initial variance; their value comes from the parameter
// vector (see filter.hpp, init_state).

#include "e3s2/types.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace e3s2 {

enum class Variant { E3S2, E3S2_G };
enum class Observable { Emissions, Gdp, Renewables };
enum class Placement { State, Measurement };

/// State symbols. `BetaY` holds log(beta_Y) under E3S2-g.
enum class State { E, Y, BetaC, BetaO, BetaG, BetaY, R, DR, DBetaY, Alpha };
inline constexpr int kStateKinds = 10;

enum class Param {
  BetaC,
  BetaO,
  BetaG,
  DBetaY,
  DR,
  G,   // growth rate of log(beta_Y); first stage when a break year is set
  G2,  // second-stage growth rate
  Phi,
  VarEtaE,
  VarEtaY,
  VarEtaBetaC,
  VarEtaBetaO,
  VarEtaBetaG,
  VarEtaBetaY,
  VarEtaR,
  VarEtaDR,
  VarEtaDBetaY,
  VarEpsE,
  VarEpsY,
  VarEpsR,
  VarEtaAlpha,
};
inline constexpr int kParamCount = 21;

std::string_view to_string(Variant v);
std::string_view to_string(Observable o);
std::string_view to_string(Placement p);
std::string_view to_string(State s);
std::string_view to_string(Param p);
Variant variant_from_string(std::string_view s);
Observable observable_from_string(std::string_view s);
Placement placement_from_string(std::string_view s);
Param param_from_string(std::string_view s);
bool is_variance(Param p);

/// One-period additive intervention at `year`.
struct DummySpec {
  Observable target = Observable::Emissions;
  Placement placement = Placement::Measurement;
  int year = 0;

  std::string name() const;
  friend bool operator==(const DummySpec&, const DummySpec&) = default;
};

struct ModelSpec {
  Variant variant = Variant::E3S2;
  bool tv_beta_C = false;
  bool tv_beta_O = false;
  bool tv_beta_G = false;
  bool ll_beta_Y = false;  // stochastic drift of beta_Y
  bool ll_R = false;       // stochastic drift of R*
  bool exogenous_R = false;
  std::vector<DummySpec> dummies;
  std::optional<int> two_stage_break;  // E3S2-g only
  /// Variances held at exactly zero in addition to the structural ones.
  std::vector<Param> pinned;
  /// Emissions module alone: states (E*, beta_C, beta_O, beta_G), emissions observed.
  bool emissions_only = false;

  bool renewables_exogenous() const { return exogenous_R || variant == Variant::E3S2_G; }
  bool is_pinned(Param p) const;
  /// Throws SpecError on violated invariants.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ExogInput {
  int year = 0;
  double coal = 0, oil = 0, gas = 0, nuclear = 0, renewables = 0;
  double fossil() const { return coal + oil + gas; }
  double non_renewable() const { return coal + oil + gas + nuclear; }
};

struct EnergySeries {
  std::vector<int> years;
  std::vector<double> coal, oil, gas, nuclear, renewables;

  std::size_t size() const { return years.size(); }
  ExogInput at(std::size_t i) const {
    return {years[i], coal[i], oil[i], gas[i], nuclear[i], renewables[i]};
  }
  /// Throws DataError unless lengths match, years are uniformly increasing,
  /// and all values are finite and nonnegative.
  void validate() const;
  EnergySeries slice(std::size_t first, std::size_t count) const;
};

struct ObservationSeries {
  std::vector<int> years;
  std::vector<double> emissions, gdp, renewables;

  std::size_t size() const { return years.size(); }
  const std::vector<double>& series(Observable o) const;
  std::vector<double>& series(Observable o);
  ObservationSeries slice(std::size_t first, std::size_t count) const;
};

class StateLayout {
 public:
  StateLayout() { index_.fill(-1); }
  explicit StateLayout(std::vector<State> states);

  int size() const { return static_cast<int>(states_.size()); }
  bool has(State s) const { return index_[static_cast<int>(s)] >= 0; }
  /// Position of `s`; throws ModelError if absent.
  int index(State s) const;
  State state(int i) const { return states_.at(static_cast<std::size_t>(i)); }
  const std::vector<State>& states() const { return states_; }
  std::string name(int i) const;

  friend bool operator==(const StateLayout& a, const StateLayout& b) { return a.states_ == b.states_; }

 private:
  std::vector<State> states_;
  std::array<int, kStateKinds> index_{};
};

class ParameterVector {
 public:
  double& operator[](Param p) { return values_[static_cast<int>(p)]; }
  double operator[](Param p) const { return values_[static_cast<int>(p)]; }
  std::vector<double>& dummies() { return dummies_; }
  const std::vector<double>& dummies() const { return dummies_; }

  friend bool operator==(const ParameterVector&, const ParameterVector&) = default;

 private:
  std::array<double, kParamCount> values_{};
  std::vector<double> dummies_;
};

/// Either a named scalar parameter or the coefficient of dummy `dummy`.
struct ParamRef {
  Param id = Param::BetaC;
  int dummy = -1;
  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

struct FreeParameter {
  ParamRef ref;
  std::string name;
  bool variance = false;
};

double get(const ParameterVector& p, const ParamRef& r);
void set(ParameterVector& p, const ParamRef& r, double value);

/// Parameters estimated by maximum likelihood under `spec`, in a fixed order:
/// level parameters first, then dummies, then variances.
std::vector<FreeParameter> free_parameters(const ModelSpec& spec);

/// Checks nonnegativity of free variances, |phi| < 1, and the dummy count.
void validate_params(const ModelSpec& spec, const ParameterVector& params);

StateLayout build_layout(const ModelSpec& spec);
std::vector<Observable> observables(const ModelSpec& spec);

/// Deterministic part of the state recursion, T_{t-1}(x), evaluated with the
/// exogenous energy of the target year `u.year`.
Vec transition(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
               const Vec& x, const ExogInput& u);

/// Partial derivatives of `transition` with respect to the state.
Mat transition_jacobian(const ModelSpec& spec, const StateLayout& layout,
                        const ParameterVector& params, const Vec& x, const ExogInput& u);

/// Loading of the state disturbances onto the states, R_{t-1}(x). The
/// emissions row carries the factor disturbances weighted by fuel use and the
/// output row carries the renewables disturbance weighted by beta_Y, so that
/// E*_t and Y*_t see the current-period factor and renewables states.
Mat disturbance_loading(const ModelSpec& spec, const StateLayout& layout, const Vec& x,
                        const ExogInput& u);

/// Z_t(x) plus measurement dummies active in `year`.
ObsVec measurement(const ModelSpec& spec, const StateLayout& layout, const ParameterVector& params,
                   const Vec& x, int year);

/// Constant selection matrix dZ/dx.
ObsStateMat measurement_jacobian(const ModelSpec& spec, const StateLayout& layout);

struct NoiseCovariances {
  Mat state;        // Q, diagonal, aligned with the layout
  ObsMat measurement;  // H, diagonal, aligned with observables(spec)
};

NoiseCovariances noise_covariances(const ModelSpec& spec, const StateLayout& layout,
                                   const ParameterVector& params);

}  // namespace e3s2
