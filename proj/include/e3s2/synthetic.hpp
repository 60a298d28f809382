#pragma once

// Synthetic energy paths and data-generating setups for simulation studies
// and fixtures. Scales: energy in Gtoe, emissions in GtCO2, GDP in trillion
// USD, so that conversion factors are in tCO2 per toe and productivity drifts
// in trillion USD per Gtoe per year.

#include "e3s2/filter.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace e3s2 {

enum class RegionScale { OecdLike, LamLike };

/// Smooth fuel paths with small seeded wiggles; bounded for any length.
EnergySeries synthetic_energy(int n, RegionScale scale, std::uint64_t seed = 7, int first_year = 1971);

struct SyntheticSetup {
  ModelSpec spec;
  ParameterVector params;
  EnergySeries energy;
  Vec x0;
};

/// Initial state for the simulator: E* and Y* consistent with the first
/// year's inputs, factors at their parameter (or Marland) values.
Vec start_state(const ModelSpec& spec, const ParameterVector& params, const EnergySeries& energy, double beta_y0,
                double r0, double d_r0, double d_beta_y0);

/// OECD-type truth: beta_C = 3.9852, beta_O = 2.6785, d_beta_Y = 0.1075,
/// var_eta_beta_Y = 0.0053, var_eta_R = 3.6e-5, for any E3S2 spec.
SyntheticSetup oecd_setup(const ModelSpec& spec, int n, std::uint64_t energy_seed = 7);

/// LAM-type truth: tv beta_C, beta_O = 3.3775, beta_G = 2.3005,
/// d_beta_Y = 0.0196, d_R = 0.0032.
SyntheticSetup lam_setup(int n, std::uint64_t energy_seed = 7);

/// Emissions sub-model with Marland factors; var_eta_E pinned at zero.
SyntheticSetup benchmark_setup(int n, std::uint64_t energy_seed = 7);

/// E3S2-g truth with g = 0.019.
SyntheticSetup geometric_setup(int n, std::uint64_t energy_seed = 7);

/// Writes a two-country dataset (energy.csv, observations.csv, regions.csv,
/// excluded.csv) simulated from `setup`, in mtoe / MtCO2 / local currency.
/// Countries: BRA and MEX in LAM, plus rows for the excluded ABW.
void write_fixture_dataset(const std::filesystem::path& dir, const SyntheticSetup& setup, std::uint64_t seed);

}  // namespace e3s2
