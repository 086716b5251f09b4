#pragma once

// Scenario orchestration and CSV emission. Each scenario composes the module
// operations, writes report.csv plus its scenario-specific files into the
// output directory and returns the collected metrics. Outputs are
// deterministic for a fixed config and seed.

#include "thermistor/run_config.hpp"

#include <string>
#include <utility>
#include <vector>

namespace thermistor {

struct RunReport {
  std::string scenario;
  int exit_code = 0;  // 0 ok, 2 validation, 3 solver, 4 basin, 5 I/O
  std::string message;
  std::vector<std::pair<std::string, double>> metrics;  // present iff the scenario succeeded
};

// Executes the configured scenario; failures are captured in the exit code
// and message rather than thrown, and partial artifacts (report, residual
// history) are still written.
RunReport run_scenario(const RunConfig& config, const std::string& out_dir);

// Hypothesis validation entry point of the `validate` subcommand; returns the
// process exit code (0 or 2) and prints one line per hypothesis.
int run_validate(const RunConfig& config);

}  // namespace thermistor
