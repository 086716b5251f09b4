#pragma once

// Continuous problem data for the coupled temperature/potential system
//
//   y_t - div(kappa(y) grad y) = sigma(y)|grad p|^2 + 2 sigma(y) grad p . grad z*
//                                + sigma(y)|grad z*|^2 + f
//   p_t - div(sigma(y) grad p) - div(sigma(y) grad z*) = -z*_t + g
//
// with homogeneous Dirichlet conditions, where p = z - z* homogenizes the
// boundary potential. Coefficient laws carry certified bounds; the validator
// samples every structural hypothesis on the data.

#include "thermistor/grid.hpp"

#include <functional>
#include <string>
#include <vector>

namespace thermistor {

struct CoefficientLaw {
  std::function<double(double)> eval;
  std::function<double(double)> deriv1;  // optional analytic derivatives;
  std::function<double(double)> deriv2;  // centered differences otherwise
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double deriv_bound = 0.0;

  double operator()(double u) const { return eval(u); }
  double d1(double u) const;
  double d2(double u) const;

  static CoefficientLaw constant(double c);
  // base + amp * tanh(u)
  static CoefficientLaw tanh_law(double base, double amp, double lower, double upper,
                                 double deriv_bound);
  // slope * u + offset (useful for failure-path tests)
  static CoefficientLaw linear(double slope, double offset, double lower, double upper,
                               double deriv_bound);
};

struct BoundaryPotential {
  std::function<double(double, double)> value;
  std::function<double(double, double)> time_deriv;
  std::function<double(double, double)> space_grad;
  std::function<double(double, double)> laplacian;
  std::function<double(double, double)> grad_time_deriv;
  std::function<double(double, double)> laplacian_time_deriv;
  double decay_amp = 1.0;   // C*
  double decay_rate = 1.0;  // gamma

  static BoundaryPotential zero();
  // eps * e^{-gamma t} * x^2 / 2
  static BoundaryPotential separable_quadratic(double eps, double gamma);
  // Same potential with a C^inf time cutoff vanishing at t = T_horizon (ramp
  // over the last ramp_frac of the horizon). The control construction needs
  // the rho-weighted z* expressions integrable up to the terminal time, which
  // the plain exponential profile does not satisfy.
  static BoundaryPotential separable_quadratic_cutoff(double eps, double gamma, double T_horizon,
                                                      double ramp_frac = 0.2);
  // same potential evaluated at t + offset (large-time control windows)
  BoundaryPotential shifted(double offset) const;
};

struct ProblemData {
  double x_lo = 0.0;
  double x_hi = 1.0;
  double T = 1.0;
  double omega_a = 0.7;
  double omega_b = 1.0;
  CoefficientLaw kappa;
  CoefficientLaw sigma;
  BoundaryPotential zstar;
  std::function<double(double)> y0;
  std::function<double(double)> p0;
  std::function<double(double, double)> f;
  std::function<double(double, double)> g;
  double x0 = 1.0;  // boundary point for the H8 check
  double t1 = 0.25;
  double t2 = 0.75;

  // Omega = (0,1), omega = (0.7, 1), T = 1, tanh coefficient laws,
  // z* = zstar_eps e^{-gamma t} x^2/2, y0 = scale sin(pi x), p0 = scale sin(2 pi x).
  static ProblemData default_scenario(double data_scale = 0.1, double zstar_eps = 0.1,
                                      double zstar_gamma = 1.0);
};

struct HypothesisCheck {
  std::string name;
  bool passed = false;
  double worst_value = 0.0;
  double bound = 0.0;
  double where = 0.0;  // sample location (u for laws, t for time-dependent checks)
  std::string note;
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;
  bool all_passed() const;
  const HypothesisCheck* find(const std::string& name) const;
};

struct LawSampleRange {
  double lo = -5.0;
  double hi = 5.0;
  int n = 1001;
};

// Samples H2-H6 and H8 against their stated bounds and H1/H7/H9/H10 through
// finite sampled surrogates (H9 uses the clamped rho weight). Throws
// ValidationError when a sampled value is non-finite.
ValidationReport validate_hypotheses(const ProblemData& data, int n_samples,
                                     const LawSampleRange& law_range = {});

// p0 = z0 - z*(.,0) nodewise; z0_nodes includes the boundary values and must
// match z* there to 1e-12.
FieldVector transform_to_homogeneous(const Eigen::VectorXd& z0_nodes, const Grid1D& grid,
                                     const BoundaryPotential& zstar);

// Right-hand sides of the homogenized system at time t:
//   rhs_y = sigma(y)|grad p|^2 + 2 sigma(y) grad p . grad z* + sigma(y)|grad z*|^2 + f
//   rhs_p = div(sigma(y) grad z*) - z*_t + g   (conservative discrete divergence)
void nonlinear_rhs(const FieldVector& y, const FieldVector& p, double t, const ProblemData& data,
                   const Grid1D& grid, FieldVector& rhs_y, FieldVector& rhs_p);

// Nodal samples (n_cells+1) of a function of x.
std::vector<double> sample_nodes(const std::function<double(double)>& fn, const Grid1D& grid);
// Interior samples of a function of x.
FieldVector sample_interior(const std::function<double(double)>& fn, const Grid1D& grid);

}  // namespace thermistor
