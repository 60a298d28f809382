#include "e3s2/diagnostics.hpp"

#include "e3s2/json_io.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>
#include <ostream>

namespace e3s2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double chi2_upper(double stat, double dof) {
  if (!(stat > 0)) return 1.0;
  if (std::isinf(stat)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

void check_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("non-finite value in residual series");
  }
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

TestResult ljung_box(std::span<const double> x, int lag) {
  const auto n = static_cast<int>(x.size());
  if (lag < 1) throw DataError("Ljung-Box lag must be positive");
  if (n <= lag) throw DataError("Ljung-Box needs more observations than lags");
  check_finite(x);
  const double m = mean_of(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - m) * (v - m);
  if (!(c0 > 0)) throw DataError("Ljung-Box on a constant series");
  double q = 0.0;
  for (int k = 1; k <= lag; ++k) {
    double ck = 0.0;
    for (int t = k; t < n; ++t) ck += (x[t] - m) * (x[t - k] - m);
    const double r = ck / c0;
    q += r * r / static_cast<double>(n - k);
  }
  q *= static_cast<double>(n) * (n + 2.0);
  return {q, chi2_upper(q, lag)};
}

Moments moments(std::span<const double> x) {
  Moments out;
  const auto n = static_cast<double>(x.size());
  if (x.empty()) return {kNaN, kNaN, kNaN, kNaN};
  out.mean = mean_of(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - out.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  out.std = x.size() > 1 ? std::sqrt(m2 / (n - 1.0)) : kNaN;
  m2 /= n;
  m3 /= n;
  m4 /= n;
  out.skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : kNaN;
  out.kurtosis = m2 > 0 ? m4 / (m2 * m2) : kNaN;
  return out;
}

TestResult jarque_bera(std::span<const double> x) {
  if (x.size() < 8) throw DataError("Jarque-Bera needs at least 8 observations");
  check_finite(x);
  const Moments m = moments(x);
  if (!std::isfinite(m.skewness)) throw DataError("Jarque-Bera on a constant series");
  const double k = m.kurtosis - 3.0;
  const double jb = static_cast<double>(x.size()) / 6.0 * (m.skewness * m.skewness + k * k / 4.0);
  return {jb, chi2_upper(jb, 2.0)};
}

std::string stars(double p) {
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

const ObservableDiagnostics* ResidualDiagnostics::find(Observable o) const {
  for (const auto& r : rows) {
    if (r.observable == o) return &r;
  }
  return nullptr;
}

ResidualDiagnostics diagnostics_table(const FilterOutput& f) {
  ResidualDiagnostics out;
  for (Observable o : f.observables) {
    ObservableDiagnostics d;
    d.observable = o;
    const auto v = f.standardized_series(o, true);
    d.n = static_cast<int>(v.size());
    try {
      d.m = moments(v);
      d.m.kurtosis -= 3.0;
      d.jb = jarque_bera(v);
      d.q1 = ljung_box(v, 1);
      d.q5 = ljung_box(v, 5);
    } catch (const std::exception& e) {
      d.valid = false;
      d.note = e.what();
      d.jb = d.q1 = d.q5 = {kNaN, kNaN};
    }
    out.rows.push_back(d);
  }
  return out;
}

void ResidualDiagnostics::write_csv(std::ostream& os) const {
  os << "observable,n,Mean,Std,Skew,Kurt,JB,Q(1),Q(5),JB_p,Q(1)_p,Q(5)_p,JB_sig,Q(1)_sig,Q(5)_sig\n";
  for (const auto& r : rows) {
    os << to_string(r.observable) << ',' << r.n << ',' << format_number(r.m.mean) << ','
       << format_number(r.m.std) << ',' << format_number(r.m.skewness) << ',' << format_number(r.m.kurtosis)
       << ',' << format_number(r.jb.statistic) << ',' << format_number(r.q1.statistic) << ','
       << format_number(r.q5.statistic) << ',' << format_number(r.jb.p_value) << ','
       << format_number(r.q1.p_value) << ',' << format_number(r.q5.p_value) << ',' << stars(r.jb.p_value) << ','
       << stars(r.q1.p_value) << ',' << stars(r.q5.p_value) << '\n';
  }
}

}  // namespace e3s2
