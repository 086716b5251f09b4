#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace thermistor {

// Exit-code contract of the CLI: 2 = validation, 3 = solver, 4 = basin, 5 = I/O.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what, std::vector<double> history = {})
      : std::runtime_error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

struct OutsideBasinError : std::runtime_error {
  explicit OutsideBasinError(const std::string& what, std::vector<double> history = {},
                             double achieved = 0.0, double min_tbar = 0.0)
      : std::runtime_error(what),
        residual_history(std::move(history)),
        achieved_norm(achieved),
        min_tbar_estimate(min_tbar) {}
  std::vector<double> residual_history;
  double achieved_norm;
  double min_tbar_estimate;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace thermistor
