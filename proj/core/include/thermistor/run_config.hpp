#pragma once

// Run configuration: flat key = value text with [section] headers, strict
// about unknown keys and admissible ranges. Defaults reproduce the desk-scale
// scenario; the exact grammar is documented in the README.

#include "thermistor/model.hpp"

#include <cstdint>
#include <string>

namespace thermistor {

enum class Scenario {
  Simulate,
  Stability,
  Observability,
  LinearControl,
  NonlinearControl,
  LargeTime,
};

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct RunConfig {
  Scenario scenario = Scenario::Simulate;

  // domain
  double x_lo = 0.0, x_hi = 1.0;
  double T = 1.0;
  double omega_a = 0.7, omega_b = 1.0;
  double x0 = 1.0;
  double t1_frac = 0.25, t2_frac = 0.75;

  // coefficient laws: "tanh", "constant" or "linear"
  std::string kappa_law = "tanh";
  double kappa_base = 1.0, kappa_amp = 0.25;
  double kappa_lower = 0.5, kappa_upper = 2.0, kappa_deriv_bound = 1.0;
  std::string sigma_law = "tanh";
  double sigma_base = 1.0, sigma_amp = 0.25;
  double sigma_lower = 0.5, sigma_upper = 2.0, sigma_deriv_bound = 1.0;

  // boundary potential and initial data
  double zstar_eps = 0.1, zstar_gamma = 1.0;
  std::string zstar_cutoff = "auto";  // on | off | auto (on for control scenarios)
  double data_scale = 0.1;
  std::string data_shape = "sine";  // or "zero"

  // discretization
  int n_cells = 128;
  int n_steps = 256;

  // Carleman weights
  double lambda = 0.3;
  double s_mult = 1.5;
  double tau1 = 3.0, tau2 = 3.0;
  double c0 = 1.0;
  double range_cap = 12.0;  // log-range cap of the assembled weight factors
  double tau_star_echo = 18.0;  // derived on load

  // solvers
  double cg_tol = 1e-10;
  double liusternik_tol = 1e-6;
  int max_iter = 30;
  double smallness_threshold = 0.5;

  // scenario extras
  int observability_samples = 50;
  double large_time_t0 = 1.0;
  double large_time_threshold = 0.1;

  std::string output_dir = "out";
  std::uint64_t seed = 12345;

  ProblemData to_problem_data() const;
  CoefficientLaw make_law(const std::string& which) const;
};

// Parses the file, applies defaults for absent keys and validates ranges.
// Throws IoError when the file cannot be read and ValidationError (with the
// line number) on malformed syntax, unknown keys or out-of-range values.
RunConfig parse_config(const std::string& path);

// Same parser over an in-memory string (tests).
RunConfig parse_config_text(const std::string& text);

}  // namespace thermistor
