#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace e3s2 {

inline constexpr int kMaxStates = 9;
inline constexpr int kMaxObs = 3;

// Bounded dynamic sizes keep the filter allocation-free.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStates, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStates, kMaxStates>;
using ObsVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxObs, 1>;
using ObsMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxObs, kMaxObs>;
using ObsStateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxObs, kMaxStates>;
using StateObsMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStates, kMaxObs>;

/// Invalid model specification or parameter vector.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad arguments to a model function (dimension mismatch, non-finite input).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical breakdown at a known time step (singular innovation covariance,
/// non-finite likelihood).
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int step)
      : std::runtime_error(what + " (time index " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace e3s2
