#pragma once

// Residual diagnostics of standardized one-step-ahead prediction errors.

#include "e3s2/filter.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace e3s2 {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Q = n(n+2) sum_{k=1..lag} r_k^2 / (n-k), chi-square(lag) p-value.
/// Throws DataError for constant or too-short series.
TestResult ljung_box(std::span<const double> x, int lag);

/// JB = n/6 (S^2 + (K-3)^2/4), chi-square(2) p-value. Requires n >= 8.
TestResult jarque_bera(std::span<const double> x);

struct Moments {
  double mean = 0.0;
  double std = 0.0;       // n-1 denominator
  double skewness = 0.0;  // m3 / m2^1.5
  double kurtosis = 0.0;  // m4 / m2^2 (not excess)
};
Moments moments(std::span<const double> x);

struct ObservableDiagnostics {
  Observable observable = Observable::Emissions;
  int n = 0;
  Moments m;
  TestResult jb, q1, q5;
  bool valid = true;
  std::string note;
};

struct ResidualDiagnostics {
  std::vector<ObservableDiagnostics> rows;

  const ObservableDiagnostics* find(Observable o) const;
  /// Columns: observable, n, Mean, Std, Skew, Kurt, JB, Q(1), Q(5), p-values,
  /// then significance stars.
  void write_csv(std::ostream& os) const;
};

/// "**" below 1%, "*" below 5%, else empty.
std::string stars(double p_value);

/// Statistics on post-burn-in standardized innovations; Kurt is excess kurtosis.
ResidualDiagnostics diagnostics_table(const FilterOutput& filtered);

}  // namespace e3s2
