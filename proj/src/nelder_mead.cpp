#include "e3s2/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace e3s2 {

namespace {

struct Simplex {
  std::vector<std::vector<double>> pts;
  std::vector<double> vals;
};

double safe_eval(const std::function<double(std::span<const double>)>& f, const std::vector<double>& x,
                 int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

// One convergence run from the given simplex. Returns iterations used.
int run(const std::function<double(std::span<const double>)>& f, Simplex& s, const NelderMeadConfig& cfg,
        int budget, int& evals, bool& converged) {
  const std::size_t n = s.pts.size() - 1;
  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), xr(n), xe(n), xc(n);
  int it = 0;
  converged = false;
  for (; it < budget; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.vals[a] < s.vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    const double spread = s.vals[worst] - s.vals[best];
    if (std::isfinite(s.vals[worst]) && spread < cfg.tolerance) {
      converged = true;
      break;
    }
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
      if (k == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += s.pts[k][j] / static_cast<double>(n);
    }
    const auto& xw = s.pts[worst];
    for (std::size_t j = 0; j < n; ++j) xr[j] = centroid[j] + cfg.reflection * (centroid[j] - xw[j]);
    const double fr = safe_eval(f, xr, evals);
    if (fr < s.vals[best]) {
      for (std::size_t j = 0; j < n; ++j) xe[j] = centroid[j] + cfg.expansion * (xr[j] - centroid[j]);
      const double fe = safe_eval(f, xe, evals);
      if (fe < fr) {
        s.pts[worst] = xe;
        s.vals[worst] = fe;
      } else {
        s.pts[worst] = xr;
        s.vals[worst] = fr;
      }
      continue;
    }
    if (fr < s.vals[second]) {
      s.pts[worst] = xr;
      s.vals[worst] = fr;
      continue;
    }
    // Contraction: outside if the reflected point beats the worst, else inside.
    const bool outside = fr < s.vals[worst];
    const auto& base = outside ? xr : xw;
    for (std::size_t j = 0; j < n; ++j) xc[j] = centroid[j] + cfg.contraction * (base[j] - centroid[j]);
    const double fc = safe_eval(f, xc, evals);
    if (fc < (outside ? fr : s.vals[worst])) {
      s.pts[worst] = xc;
      s.vals[worst] = fc;
      continue;
    }
    const auto xb = s.pts[best];
    for (std::size_t k = 0; k <= n; ++k) {
      if (k == best) continue;
      for (std::size_t j = 0; j < n; ++j) s.pts[k][j] = xb[j] + cfg.shrink * (s.pts[k][j] - xb[j]);
      s.vals[k] = safe_eval(f, s.pts[k], evals);
    }
  }
  return it;
}

Simplex make_simplex(const std::function<double(std::span<const double>)>& f, const std::vector<double>& x0,
                     const std::vector<double>& steps, int& evals) {
  const std::size_t n = x0.size();
  Simplex s;
  s.pts.push_back(x0);
  s.vals.push_back(safe_eval(f, x0, evals));
  for (std::size_t j = 0; j < n; ++j) {
    auto x = x0;
    x[j] += steps[j];
    s.vals.push_back(safe_eval(f, x, evals));
    s.pts.push_back(std::move(x));
  }
  return s;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> x0,
                             const std::vector<double>& steps, const NelderMeadConfig& cfg) {
  NelderMeadResult res;
  if (x0.empty()) {
    res.x = x0;
    res.value = safe_eval(f, x0, res.evaluations);
    res.converged = true;
    return res;
  }
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best = x0;
  for (int round = 0; round <= cfg.restarts; ++round) {
    Simplex s = make_simplex(f, best, steps, res.evaluations);
    bool conv = false;
    res.iterations += run(f, s, cfg, cfg.max_iterations, res.evaluations, conv);
    const auto it = std::min_element(s.vals.begin(), s.vals.end());
    const double improvement = best_val - *it;
    if (*it <= best_val) {
      best_val = *it;
      best = s.pts[static_cast<std::size_t>(it - s.vals.begin())];
    }
    res.converged = conv;
    // A collapsed simplex can stall; a fresh one around the incumbent usually
    // recovers. A converged restart that fails to improve ends the search.
    if (conv && round > 0 && !(improvement > cfg.tolerance)) break;
  }
  res.x = best;
  res.value = best_val;
  return res;
}

}  // namespace e3s2
