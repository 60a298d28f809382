#include "e3s2/cli.hpp"

#include "e3s2/data_io.hpp"
#include "e3s2/montecarlo.hpp"
#include "e3s2/scenario.hpp"
#include "e3s2/synthetic.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <sstream>

namespace e3s2 {

namespace fs = std::filesystem;

namespace {

class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpecInput {
  ModelSpec spec;
  Json params = Json::object();
  std::vector<std::string> fixed;
};

SpecInput resolve_spec(const RunConfig& cfg, const ModelSpec& fallback = {}) {
  SpecInput in;
  in.spec = fallback;
  if (!cfg.spec_file.empty()) {
    Json j;
    try {
      j = Json::parse(read_text(cfg.spec_file));
    } catch (const Json::parse_error& e) {
      throw SpecError("spec file " + cfg.spec_file.string() + ": " + e.what());
    }
    in.spec = spec_from_json(j);
    if (j.contains("params")) in.params = j["params"];
    if (j.contains("fixed")) in.fixed = j["fixed"].get<std::vector<std::string>>();
    if (cfg.variant && *cfg.variant != in.spec.variant) throw SpecError("--variant conflicts with the spec file");
  } else if (cfg.variant) {
    in.spec.variant = *cfg.variant;
    if (in.spec.variant == Variant::E3S2_G) {
      in.spec.tv_beta_C = in.spec.tv_beta_O = in.spec.tv_beta_G = false;
      in.spec.ll_R = in.spec.ll_beta_Y = false;
    }
  }
  in.spec.validate();
  return in;
}

RegionData load_data(const RunConfig& cfg) {
  RegionData d = load_region_dataset(cfg.data_dir, cfg.region);
  spdlog::info("loaded {} years for {}", d.energy.size(), d.region);
  return d;
}

Json fit_to_json(const FitResult& fit, const std::string& region) {
  Json j;
  j["region"] = region;
  j["spec"] = spec_to_json(fit.spec);
  j["loglik"] = json_number(fit.loglik);
  j["initial_loglik"] = json_number(fit.initial_loglik);
  j["converged"] = fit.converged;
  j["n_iter"] = fit.n_iter;
  j["n_eval"] = fit.n_eval;
  j["burn_in"] = fit.filter.burn_in;
  j["n_obs"] = fit.filter.size();
  auto params = Json::array();
  for (std::size_t i = 0; i < fit.free.size(); ++i) {
    const auto& c = fit.covariance;
    params.push_back({{"name", fit.free[i].name},
                      {"estimate", json_number(get(fit.params, fit.free[i].ref))},
                      {"stderr", json_number(i < c.stderr.size() ? c.stderr[i] : std::nan(""))},
                      {"at_boundary", i < c.at_boundary.size() && c.at_boundary[i]}});
  }
  j["parameters"] = std::move(params);
  auto names = Json::array();
  for (const auto& f : fit.free) names.push_back(f.name);
  auto mat = Json::array();
  for (Eigen::Index r = 0; r < fit.covariance.cov.rows(); ++r) {
    auto row = Json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cov.cols(); ++c) row.push_back(json_number(fit.covariance.cov(r, c)));
    mat.push_back(std::move(row));
  }
  j["covariance"] = {{"names", names}, {"matrix", mat}};
  j["flags"] = {{"pseudo_inverse", fit.covariance.pseudo_inverse}, {"clipped", fit.covariance.clipped}};
  j["warnings"] = fit.covariance.warnings;
  return j;
}

std::string smoothed_csv(const FitResult& fit, const SmootherOutput& s) {
  const StateLayout layout = build_layout(fit.spec);
  std::ostringstream os;
  os << "year";
  for (int i = 0; i < layout.size(); ++i) os << ',' << layout.name(i) << "_mean," << layout.name(i) << "_sd";
  os << '\n';
  for (std::size_t t = 0; t < s.years.size(); ++t) {
    os << s.years[t];
    for (int i = 0; i < layout.size(); ++i) {
      os << ',' << format_number(s.mean[t][i]) << ',' << format_number(std::sqrt(std::max(0.0, s.cov[t](i, i))));
    }
    os << '\n';
  }
  return os.str();
}

struct FitBundle {
  RegionData data;
  FitResult fit;
  SmootherOutput smooth;
  std::optional<SelectionTrace> trace;
};

FitBundle fit_region(const RunConfig& cfg) {
  FitBundle b;
  b.data = load_data(cfg);
  SpecInput in = resolve_spec(cfg);
  if (cfg.select) {
    SelectionConfig sc;
    sc.thresholds = cfg.thresholds;
    b.trace = select_model(b.data.energy, b.data.obs, sc);
    if (b.trace->failed) throw NonConvergence("model selection stopped: " + b.trace->failure);
    in.spec = b.trace->final_spec;
    in.params = params_to_json(in.spec, b.trace->final_params);
  }
  ParameterVector guess = default_initial_guess(in.spec, b.data.energy, b.data.obs);
  params_from_json(in.spec, in.params, guess);
  OptimizerConfig oc;
  oc.fixed = in.fixed;
  b.fit = fit_mle(in.spec, b.data.energy, b.data.obs, guess, oc);
  b.smooth = ekf_smoother(b.fit.filter);
  return b;
}

void write_run_config(const RunConfig& cfg) { write_text(cfg.out_dir / "run_config.json", cfg.to_json().dump(2) + "\n"); }

}  // namespace

void RunConfig::validate() const {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw SpecError(command + ": " + what);
  };
  need(draws > 0, "--draws must be positive");
  need(runs > 0, "--runs must be positive");
  need(jobs > 0, "--jobs must be positive");
  need(length >= 10, "--length must be at least 10");
  if (command == "fit" || command == "select" || command == "project" || command == "implied") {
    need(!data_dir.empty(), "--data is required");
    need(region == "WORLD" || std::find(kRegions.begin(), kRegions.end(), region) != kRegions.end(),
         "unknown region '" + region + "'");
  }
  if (command == "project" || command == "implied") need(!pathway_file.empty(), "--pathway is required");
  need(!out_dir.empty(), "--out is required");
}

Json RunConfig::to_json() const {
  Json j;
  j["command"] = command;
  j["data"] = data_dir.generic_string();
  j["spec"] = spec_file.generic_string();
  j["pathway"] = pathway_file.generic_string();
  j["region"] = region;
  j["select"] = select;
  j["variant"] = variant ? Json(std::string(to_string(*variant))) : Json(nullptr);
  j["seed"] = seed;
  j["draws"] = draws;
  j["runs"] = runs;
  j["jobs"] = jobs;
  j["length"] = length;
  j["ccs"] = ccs;
  j["anchor_year"] = anchor_year;
  j["thresholds"] = {{"lags", thresholds.lags},
                     {"levels", thresholds.levels},
                     {"rule", thresholds.rule == RejectRule::Any ? "any" : "all"},
                     {"flatness_factor", thresholds.flatness_factor},
                     {"max_dummies_per_observable", thresholds.max_dummies_per_observable}};
  return j;
}

int cmd_fit(const RunConfig& cfg) {
  cfg.validate();
  write_run_config(cfg);
  const FitBundle b = fit_region(cfg);
  if (b.trace) write_text(cfg.out_dir / "selection_trace.json", b.trace->to_json().dump(2) + "\n");
  write_text(cfg.out_dir / "fit.json", fit_to_json(b.fit, b.data.region).dump(2) + "\n");
  std::ostringstream diag;
  diagnostics_table(b.fit.filter).write_csv(diag);
  write_text(cfg.out_dir / "diagnostics.csv", diag.str());
  write_text(cfg.out_dir / "smoothed_states.csv", smoothed_csv(b.fit, b.smooth));
  if (!b.fit.converged) throw NonConvergence("optimizer did not converge; outputs written with converged=false");
  return kExitOk;
}

int cmd_select(const RunConfig& cfg) {
  cfg.validate();
  write_run_config(cfg);
  const RegionData data = load_data(cfg);
  SelectionConfig sc;
  sc.thresholds = cfg.thresholds;
  const SelectionTrace trace = select_model(data.energy, data.obs, sc);
  write_text(cfg.out_dir / "selection_trace.json", trace.to_json().dump(2) + "\n");
  write_text(cfg.out_dir / "selection_trace.txt", trace.to_text());
  if (trace.failed) throw NonConvergence("model selection stopped: " + trace.failure);
  return kExitOk;
}

int cmd_montecarlo(const RunConfig& cfg) {
  cfg.validate();
  write_run_config(cfg);
  ModelSpec fig;
  fig.tv_beta_G = true;
  fig.ll_R = true;
  SpecInput in = resolve_spec(cfg, fig);
  if (in.spec.emissions_only || in.spec.variant == Variant::E3S2_G) {
    throw SpecError("montecarlo supports full E3S2 specifications");
  }
  SyntheticSetup setup = oecd_setup(in.spec, cfg.length);
  params_from_json(in.spec, in.params, setup.params);
  if (!cfg.data_dir.empty()) {
    const RegionData data = load_data(cfg);
    setup.energy = data.energy;
    const ExogInput u = data.energy.at(0);
    const double tot = u.non_renewable() + u.renewables;
    setup.x0 = start_state(in.spec, setup.params, setup.energy, tot > 0 ? data.obs.gdp[0] / tot : 1.0,
                           data.obs.renewables[0], setup.params[Param::DR], setup.params[Param::DBetaY]);
  } else {
    setup.x0 = start_state(in.spec, setup.params, setup.energy, 6.0, 0.3, setup.params[Param::DR],
                           setup.params[Param::DBetaY]);
  }
  MonteCarloConfig mc;
  mc.n_runs = cfg.runs;
  mc.seed = cfg.seed;
  mc.jobs = cfg.jobs;
  mc.optimizer.fixed = in.fixed;
  const MonteCarloReport rep = monte_carlo_study(in.spec, setup.params, setup.energy, setup.x0, mc);
  std::ostringstream csv;
  rep.write_csv(csv);
  write_text(cfg.out_dir / "mc_report.csv", csv.str());
  write_text(cfg.out_dir / "mc_summary.json", rep.summary_json());
  return kExitOk;
}

int cmd_project(const RunConfig& cfg) {
  cfg.validate();
  write_run_config(cfg);
  const ScenarioPathway pathway = load_pathway_csv(cfg.pathway_file);
  const FitBundle b = fit_region(cfg);
  const ProjectionAnchor anchor = build_anchor(b.fit, b.smooth, cfg.anchor_year);
  ProjectionConfig pc;
  pc.n_draws = cfg.draws;
  pc.seed = cfg.seed;
  pc.jobs = cfg.jobs;
  pc.subtract_ccs = cfg.ccs;
  const ProjectionBands bands =
      anchor.variant == Variant::E3S2_G ? project_geometric(anchor, pathway, pc) : project(anchor, pathway, pc);
  std::ostringstream csv;
  bands.write_csv(csv);
  write_text(cfg.out_dir / "bands.csv", csv.str());
  Json j = bands.to_json();
  j["region"] = b.data.region;
  j["fit"] = fit_to_json(b.fit, b.data.region);
  write_text(cfg.out_dir / "bands.json", j.dump(2) + "\n");
  if (!b.fit.converged) throw NonConvergence("optimizer did not converge; outputs written with converged=false");
  return kExitOk;
}

int cmd_implied(const RunConfig& cfg) {
  cfg.validate();
  write_run_config(cfg);
  const ScenarioPathway pathway = load_pathway_csv(cfg.pathway_file);
  const FitBundle b = fit_region(cfg);
  if (b.fit.spec.variant != Variant::E3S2) throw SpecError("implied trends need the E3S2 variant");
  const ProjectionAnchor anchor = build_anchor(b.fit, b.smooth, cfg.anchor_year);
  const double noise = b.fit.params[Param::VarEpsY] + b.fit.params[Param::VarEtaY];
  ImpliedTrendInput in;
  in.base_year = cfg.anchor_year;
  in.beta_y0 = anchor.beta_y_mean;
  auto theta = [&](const std::string& name, double& value, double& se) {
    for (std::size_t i = 0; i < anchor.theta_names.size(); ++i) {
      if (anchor.theta_names[i] == name) {
        value = anchor.theta[static_cast<Eigen::Index>(i)];
        se = std::sqrt(std::max(0.0, anchor.omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
        return true;
      }
    }
    return false;
  };
  double dby = 0.0, dby_se = 0.0;
  theta("d_beta_Y", dby, dby_se);
  in.d_beta_y = dby;
  in.noise_var = noise > 0 ? noise : 1e-6;

  std::ostringstream csv;
  csv << "region,scenario,parameter,scenario_estimate,scenario_se,historical_estimate,historical_se\n";
  auto row = [&](TrendTarget t, double hist, double hist_se) {
    const ImpliedTrendResult r = implied_trend(pathway, in, t);
    csv << b.data.region << ',' << pathway.scenario_id << ',' << to_string(t) << ',' << format_number(r.estimate)
        << ',' << format_number(r.stderr) << ',' << format_number(hist) << ',' << format_number(hist_se) << '\n';
  };
  double dr = 0.0, dr_se = 0.0;
  if (theta("d_R", dr, dr_se)) row(TrendTarget::DR, dr, dr_se);
  row(TrendTarget::DBetaY, dby, dby_se);
  write_text(cfg.out_dir / "implied_trends.csv", csv.str());
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg) {
  write_fixture_dataset(cfg.out_dir, lam_setup(cfg.length), cfg.seed);
  return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
  auto logger = spdlog::get("e3s2");
  if (!logger) logger = spdlog::stderr_color_mt("e3s2");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("E3S2_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  RunConfig cfg;
  CLI::App app{"E3S2 energy-economy-emissions state-space toolkit"};
  app.require_subcommand(1);
  std::string variant, rule = "any";
  auto common = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data_dir, "Data directory (energy.csv, observations.csv, regions.csv)");
    sub->add_option("--region", cfg.region, "OECD, REF, ASIA, MAF, LAM or WORLD");
    sub->add_option("--spec", cfg.spec_file, "Model specification JSON");
    sub->add_flag("--select", cfg.select, "Run model selection before fitting");
    sub->add_option("--variant", variant, "e3s2 or g")->check(CLI::IsMember({"e3s2", "g"}));
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--draws", cfg.draws, "Projection draws");
    sub->add_option("--runs", cfg.runs, "Monte Carlo runs");
    sub->add_option("--length", cfg.length, "Simulated series length");
    sub->add_option("--out", cfg.out_dir, "Output directory");
    sub->add_option("--jobs", cfg.jobs, "Worker threads for Monte Carlo runs and projection draws");
    sub->add_flag("--ccs", cfg.ccs, "Subtract the pathway's CCS from projected emissions");
    sub->add_option("--anchor-year", cfg.anchor_year, "Last historical year used as projection anchor");
    sub->add_option("--pathway", cfg.pathway_file, "Scenario pathway CSV");
    sub->add_option("--lags", cfg.thresholds.lags, "Ljung-Box lags for selection");
    sub->add_option("--levels", cfg.thresholds.levels, "Significance levels for selection");
    sub->add_option("--reject-rule", rule, "any or all")->check(CLI::IsMember({"any", "all"}));
  };
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fit", "Fit a specification and write estimates, diagnostics and smoothed states"},
      {"select", "Run the residual-driven model selection"},
      {"montecarlo", "Parameter-recovery study on simulated data"},
      {"project", "Projection bands conditional on a scenario pathway"},
      {"implied", "Trends implied by scenario GDP versus historical estimates"},
      {"synth", "Write a synthetic two-country dataset"}};
  for (const auto& [name, help] : commands) common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  if (!variant.empty()) cfg.variant = variant_from_string(variant);
  cfg.thresholds.rule = rule == "all" ? RejectRule::All : RejectRule::Any;

  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    spdlog::error("{}", msg);
    try {
      Json j = {{"exit_code", code}, {"error", kind}, {"message", msg}, {"command", cfg.command}};
      write_text(cfg.out_dir / "error.json", j.dump(2) + "\n");
    } catch (const std::exception& e) {
      spdlog::error("could not write error.json: {}", e.what());
    }
    return code;
  };
  try {
    if (cfg.command == "fit") return cmd_fit(cfg);
    if (cfg.command == "select") return cmd_select(cfg);
    if (cfg.command == "montecarlo") return cmd_montecarlo(cfg);
    if (cfg.command == "project") return cmd_project(cfg);
    if (cfg.command == "implied") return cmd_implied(cfg);
    return cmd_synth(cfg);
  } catch (const NonConvergence& e) {
    return fail(kExitNumerical, "non_convergence", e.what());
  } catch (const NumericalError& e) {
    return fail(kExitNumerical, "numerical", e.what());
  } catch (const DataError& e) {
    return fail(kExitInput, "data", e.what());
  } catch (const SpecError& e) {
    return fail(kExitInput, "spec", e.what());
  } catch (const ModelError& e) {
    return fail(kExitInput, "model", e.what());
  } catch (const std::exception& e) {
    return fail(kExitInput, "input", e.what());
  }
}

}  // namespace e3s2
