#pragma once

// Carleman weight machinery: the auxiliary function eta0, the alpha/xi
// exponent families (plain and with the time reparametrization m(t) that
// removes the t=0 singularity), the rho weight family in overflow-safe log
// form, consistency checks on the weight inequalities, and a numerical
// estimator for the observability constant.

#include "thermistor/grid.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace thermistor {

inline constexpr double kExponentClamp = 600.0;

double clamp_exponent(double x);
// exp with the argument clamped to [-600, 600]; never overflows or underflows to 0.
double exp_clamped(double x);

struct Eta0 {
  std::function<double(double)> value;
  std::function<double(double)> grad;
  double sup_norm = 0.0;
  double min_value = 0.0;
  double x_lo = 0.0;
  double x_hi = 1.0;
};

// Quadratic eta0 with its maximum at the right endpoint; requires the control
// region to touch x_hi. Other geometries need a caller-supplied eta0.
Eta0 build_eta0(double x_lo, double x_hi, double omega_a, double omega_b);

// max{ 2 tau2 - tau1 + 7, 1 - tau1, 4 tau2 - 3 tau1 + 15, tau2 + 7 }
double tau_star(double tau1, double tau2);

struct WeightParams {
  double lambda = 0.3;
  double s = 0.0;
  double K = 0.0;
  double tau1 = 3.0;
  double tau2 = 3.0;
  double tau_star_value = 18.0;
  double T = 1.0;
  double C0 = 1.0;
  Eta0 eta0;

  // C^inf blend: equals t(T-t) on [T/2, T], >= T^2/8 on [0, T/2].
  double m(double t) const;

  // Validates K >= ||eta0||_inf + 2 log 2, |tau1 - tau2| < 1 and s >= C0 (T + T^2).
  static WeightParams make(double T, Eta0 eta0, double lambda = 0.3, double s_multiplier = 1.5,
                           double tau1 = 3.0, double tau2 = 3.0, double C0 = 1.0);
};

struct WeightSample {
  double alpha = 0.0, xi = 0.0;
  double alpha_plus = 0.0, alpha_minus = 0.0, xi_plus = 0.0, xi_minus = 0.0;
  double alpha_hat = 0.0;
  double alpha_bar = 0.0, xi_bar = 0.0;
  double alpha_bar_plus = 0.0, alpha_bar_minus = 0.0, alpha_hat_bar = 0.0;
  double xi_bar_plus = 0.0, xi_bar_minus = 0.0;
  double beta = 0.0, beta_plus = 0.0, beta_minus = 0.0;
  double log_rho = 0.0;
  std::array<double, 7> log_rho_k{};  // rho_0 .. rho_6
};

class WeightFamily {
 public:
  explicit WeightFamily(WeightParams params);

  const WeightParams& params() const { return p_; }

  // plain family, defined on the open interval 0 < t < T
  double alpha(double x, double t) const;
  double xi(double x, double t) const;
  double alpha_plus(double t) const;
  double alpha_minus(double t) const;
  double xi_plus(double t) const;
  double xi_minus(double t) const;
  double alpha_hat(double t) const;  // 4 alpha^- - 3 alpha^+

  // barred family, defined on [0, T]; at t = T the exponents are clamped
  double alpha_bar(double x, double t) const;
  double xi_bar(double x, double t) const;
  double alpha_bar_plus(double t) const;
  double alpha_bar_minus(double t) const;
  double alpha_hat_bar(double t) const;
  double xi_bar_plus(double t) const;
  double xi_bar_minus(double t) const;

  double beta(double x, double t) const;  // alpha_bar / 2
  double beta_plus(double t) const;
  double beta_minus(double t) const;

  // log weights, clamped to +-600
  double log_rho(double t) const;
  double log_rho_k(int k, double t) const;  // k = 0 .. 6

  WeightSample eval(double x, double t) const;

 private:
  double inv_m(double t) const;  // 1/m(t), +inf collapsed to a huge finite value
  WeightParams p_;
  double e2lk_ = 0.0;      // e^{2 lambda K}
  double e_eta_max_ = 0.0; // e^{lambda sup eta0}
  double e_eta_min_ = 0.0; // e^{lambda min eta0}
};

struct InequalityCheck {
  std::string name;
  double sup_log_ratio = 0.0;
  bool pass = false;
};

struct WeightInequalityReport {
  std::vector<InequalityCheck> checks;
  bool all_pass() const;
};

// Samples the comparison inequalities rho_{k+1} <= C rho_k <= C rho, the
// derivative bounds rho_{k+2} rho_{k+2,t} <= C rho_{k+1}^2, and the
// 4 beta+ < 5 beta- < (75/16) beta+ chain. Log-derivatives use centered
// differences with step T/1e4.
WeightInequalityReport check_weight_inequalities(const WeightFamily& w, int n_time_samples);

// Condition tying the H8 window (t1, t2) to the weight profile: the maximum
// of (s xi)^{tau+a} e^{-2 s alpha} outside the window must not exceed its
// minimum inside, sampled over a in {-2, 0, 2, 4}.
struct WindowConditionReport {
  double worst_gap = 0.0;  // max over samples of (outside - inside) in log scale
  int violations = 0;
  bool pass = false;
};
WindowConditionReport check_time_window_condition(const WeightFamily& w, double t1, double t2,
                                                  int n_samples = 512);

// Diagnostic quadrature of I(tau, phi) for a discrete trajectory
// (trapezoid in t over the interior time nodes, nodal quadrature in x).
double carleman_I(double tau, const std::vector<FieldVector>& phi, const WeightFamily& w,
                  const Grid1D& grid, const TimeGrid& tgrid);

// phi/psi trajectories from terminal data, filled with n_steps+1 states each.
using AdjointSolveFn =
    std::function<void(const FieldVector& phiT, const FieldVector& psiT,
                       std::vector<FieldVector>& phi, std::vector<FieldVector>& psi)>;

struct ObservabilityResult {
  double c_obs_max = 0.0;
  std::vector<double> ratios;
  int n_flagged = 0;  // samples with omega-integral below 1e-14
  int n_samples = 0;
};

ObservabilityResult estimate_observability_constant(const AdjointSolveFn& solve, const Grid1D& grid,
                                                    const TimeGrid& tgrid, double omega_a,
                                                    double omega_b, int n_random_terminals,
                                                    std::uint64_t seed);

}  // namespace thermistor
