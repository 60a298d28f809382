#include "e3s2/montecarlo.hpp"

#include "json.hpp"
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "e3s2/json_io.hpp"

namespace e3s2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::uint64_t run_seed(std::uint64_t seed, int run) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run)};
  std::mt19937_64 gen(seq);
  return gen();
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

const ParameterSummary& MonteCarloReport::at(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter " + name + " in Monte Carlo report");
}

MonteCarloReport monte_carlo_study(const ModelSpec& spec, const ParameterVector& truth, const EnergySeries& energy,
                                   const Vec& x0, const MonteCarloConfig& config) {
  if (config.n_runs < 1) throw SpecError("n_runs must be positive");
  spec.validate();
  validate_params(spec, truth);
  const StateLayout layout = build_layout(spec);
  const auto free = optimized_parameters(spec, config.optimizer.fixed);
  const std::size_t k = free.size();
  const auto n = static_cast<std::size_t>(config.n_runs);

  std::vector<std::vector<double>> est(n, std::vector<double>(k, kNaN));
  std::vector<std::string> errors(n);
  std::vector<char> conv(n, 0);

  parallel_for(config.n_runs, config.jobs, [&](int run) {
    const auto r = static_cast<std::size_t>(run);
    try {
      const SimulationResult sim = simulate(spec, layout, truth, energy, x0, run_seed(config.seed, run));
      const ParameterVector start =
          config.start_at_truth ? truth : default_initial_guess(spec, energy, sim.observations);
      const FitResult fit = fit_mle(spec, energy, sim.observations, start, config.optimizer);
      for (std::size_t i = 0; i < k; ++i) est[r][i] = get(fit.params, free[i].ref);
      conv[r] = fit.converged;
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  MonteCarloReport rep;
  rep.n_runs = config.n_runs;
  for (std::size_t r = 0; r < n; ++r) {
    rep.converged.push_back(conv[r] != 0);
    if (!errors[r].empty()) {
      rep.failed_runs.push_back(static_cast<int>(r));
      rep.failure_messages.push_back(errors[r]);
      spdlog::warn("Monte Carlo run {} failed: {}", r, errors[r]);
    }
  }
  rep.n_failed = static_cast<int>(rep.failed_runs.size());

  for (std::size_t i = 0; i < k; ++i) {
    ParameterSummary s;
    s.name = free[i].name;
    s.variance = free[i].variance;
    s.truth = get(truth, free[i].ref);
    std::vector<double> ok;
    int zeros = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = std::isnan(est[r][i]) ? kNaN : est[r][i] - s.truth;
      s.diff.push_back(d);
      if (!std::isnan(d)) {
        ok.push_back(d);
        if (s.variance && est[r][i] == 0.0) ++zeros;
      }
    }
    if (!ok.empty()) {
      const double m = static_cast<double>(ok.size());
      s.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / m;
      double ss = 0.0;
      for (double d : ok) ss += (d - s.mean) * (d - s.mean);
      s.sd = ok.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
      s.median = median_of(ok);
      s.median_se = 1.2533 * s.sd / std::sqrt(m);
      s.pileup = static_cast<double>(zeros) / m;
    } else {
      s.mean = s.sd = s.median = s.median_se = kNaN;
    }
    rep.params.push_back(std::move(s));
  }
  return rep;
}

void MonteCarloReport::write_csv(std::ostream& os) const {
  os << "run,parameter,truth,estimate,difference\n";
  for (int r = 0; r < n_runs; ++r) {
    for (const auto& p : params) {
      const double d = p.diff[static_cast<std::size_t>(r)];
      os << r << ',' << p.name << ',' << format_number(p.truth) << ',' << format_number(p.truth + d) << ','
         << format_number(d) << '\n';
    }
  }
}

std::string MonteCarloReport::summary_json() const {
  nlohmann::ordered_json j;
  j["n_runs"] = n_runs;
  j["n_failed"] = n_failed;
  j["failed_runs"] = failed_runs;
  j["failure_messages"] = failure_messages;
  int nc = 0;
  for (bool c : converged) nc += c;
  j["n_converged"] = nc;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["variance"] = p.variance;
    e["truth"] = json_number(p.truth);
    e["median_diff"] = json_number(p.median);
    e["mean_diff"] = json_number(p.mean);
    e["sd_diff"] = json_number(p.sd);
    e["median_se"] = json_number(p.median_se);
    if (p.variance) e["pileup_fraction"] = json_number(p.pileup);
    arr.push_back(std::move(e));
  }
  j["parameters"] = std::move(arr);
  return j.dump(2) + "\n";
}

}  // namespace e3s2
