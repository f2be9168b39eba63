#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfmqtt {

/// Malformed or inconsistent user input (files, configs, arguments).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine could not produce a result for valid-looking input.
class EstimationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class RankDeficientError : public EstimationError {
public:
  RankDeficientError(std::size_t column, const std::string& context);
  /// 0-based design column found to be linearly dependent on the others.
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t column_;
};

class ConvergenceError : public EstimationError {
public:
  ConvergenceError(const std::string& what, double final_gap);
  double final_gap() const noexcept { return final_gap_; }

private:
  double final_gap_;
};

class DegenerateFactorError : public EstimationError {
public:
  DegenerateFactorError() : EstimationError("degenerate factor draw") {}
};

class CollinearityError : public EstimationError {
public:
  using EstimationError::EstimationError;
};

/// Every restart of an iterative factor fit failed.
class FactorFitError : public EstimationError {
public:
  FactorFitError(const std::string& what, std::vector<double> best_trajectory);
  const std::vector<double>& best_trajectory() const noexcept { return trajectory_; }

private:
  std::vector<double> trajectory_;
};

}  // namespace qfmqtt
