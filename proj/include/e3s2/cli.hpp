#pragma once

// Command-line front end: fit, select, montecarlo, project, implied, synth.

#include "e3s2/json_io.hpp"
#include "e3s2/selection.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace e3s2 {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string command;
  std::filesystem::path data_dir;
  std::filesystem::path spec_file;
  std::filesystem::path pathway_file;
  std::filesystem::path out_dir = ".";
  std::string region = "WORLD";
  bool select = false;
  std::optional<Variant> variant;
  std::uint64_t seed = 1;
  int draws = 10000;
  int runs = 200;
  int jobs = 1;
  int length = 49;
  bool ccs = false;
  int anchor_year = 2019;
  SelectionThresholds thresholds;

  /// Throws SpecError when required inputs for `command` are missing.
  void validate() const;
  Json to_json() const;
};

int cmd_fit(const RunConfig& config);
int cmd_select(const RunConfig& config);
int cmd_montecarlo(const RunConfig& config);
int cmd_project(const RunConfig& config);
int cmd_implied(const RunConfig& config);
int cmd_synth(const RunConfig& config);

/// Parses arguments, runs the command, maps failures to exit codes and
/// writes error.json into the output directory on failure.
int run_cli(int argc, const char* const* argv);

}  // namespace e3s2
