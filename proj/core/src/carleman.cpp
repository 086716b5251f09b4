#include "thermistor/carleman.hpp"

#include "thermistor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace thermistor {

double clamp_exponent(double x) {
  if (std::isnan(x)) return kExponentClamp;  // only reachable through inf-inf at t = T
  return std::clamp(x, -kExponentClamp, kExponentClamp);
}

double exp_clamped(double x) { return std::exp(clamp_exponent(x)); }

Eta0 build_eta0(double x_lo, double x_hi, double omega_a, double omega_b) {
  if (std::abs(omega_b - x_hi) > 1e-12)
    throw ValidationError("build_eta0: control region must touch the right endpoint");
  if (!(omega_a > x_lo && omega_a < x_hi))
    throw ValidationError("build_eta0: omega must be a proper subinterval");
  const double len = x_hi - x_lo;
  Eta0 e;
  e.x_lo = x_lo;
  e.x_hi = x_hi;
  e.value = [x_hi, len](double x) {
    const double u = (x - x_hi) / len;
    return 2.0 - u * u;
  };
  e.grad = [x_hi, len](double x) { return -2.0 * (x - x_hi) / (len * len); };
  e.sup_norm = 2.0;
  e.min_value = 1.0;
  return e;
}

double tau_star(double tau1, double tau2) {
  return std::max({2.0 * tau2 - tau1 + 7.0, 1.0 - tau1, 4.0 * tau2 - 3.0 * tau1 + 15.0, tau2 + 7.0});
}

namespace {

// C^inf smoothstep: 0 below 0, 1 above 1.
double smoothstep_cinf(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / u);
  const double b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}

}  // namespace

double WeightParams::m(double t) const {
  const double base = T * T / 8.0;
  const double theta = smoothstep_cinf((t - 0.3 * T) / (0.2 * T));
  return base + (t * (T - t) - base) * theta;
}

WeightParams WeightParams::make(double T, Eta0 eta0, double lambda, double s_multiplier,
                                double tau1, double tau2, double C0) {
  if (!(T > 0.0)) throw ValidationError("WeightParams: horizon must be positive");
  if (!(lambda > 0.0)) throw ValidationError("WeightParams: lambda must be positive");
  if (!(std::abs(tau1 - tau2) < 1.0)) throw ValidationError("WeightParams: |tau1 - tau2| must be < 1");
  WeightParams p;
  p.T = T;
  p.lambda = lambda;
  p.tau1 = tau1;
  p.tau2 = tau2;
  p.tau_star_value = tau_star(tau1, tau2);
  p.C0 = C0;
  p.eta0 = std::move(eta0);
  p.K = p.eta0.sup_norm + 2.0 * std::log(2.0);
  const double s0 = C0 * (T + T * T);
  if (!(s_multiplier >= 1.0))
    throw ValidationError("WeightParams: s multiplier must be >= 1 so that s >= s0");
  p.s = s_multiplier * s0;
  return p;
}

WeightFamily::WeightFamily(WeightParams params) : p_(std::move(params)) {
  e2lk_ = std::exp(2.0 * p_.lambda * p_.K);
  e_eta_max_ = std::exp(p_.lambda * p_.eta0.sup_norm);
  e_eta_min_ = std::exp(p_.lambda * p_.eta0.min_value);
  if (!(e2lk_ - e_eta_max_ > 0.0))
    throw ValidationError("WeightFamily: e^{2 lambda K} must exceed e^{lambda sup eta0}");
}

namespace {
inline void require_open_interval(double t, double T) {
  if (!(t > 0.0 && t < T))
    throw std::domain_error("weight family: plain weights need 0 < t < T");
}
inline void require_closed_interval(double t, double T) {
  if (!(t >= 0.0 && t <= T))
    throw std::domain_error("weight family: barred weights need 0 <= t <= T");
}
}  // namespace

double WeightFamily::alpha(double x, double t) const {
  require_open_interval(t, p_.T);
  return (e2lk_ - std::exp(p_.lambda * p_.eta0.value(x))) / (t * (p_.T - t));
}

double WeightFamily::xi(double x, double t) const {
  require_open_interval(t, p_.T);
  return std::exp(p_.lambda * p_.eta0.value(x)) / (t * (p_.T - t));
}

double WeightFamily::alpha_plus(double t) const {
  require_open_interval(t, p_.T);
  return (e2lk_ - e_eta_min_) / (t * (p_.T - t));
}

double WeightFamily::alpha_minus(double t) const {
  require_open_interval(t, p_.T);
  return (e2lk_ - e_eta_max_) / (t * (p_.T - t));
}

double WeightFamily::xi_plus(double t) const {
  require_open_interval(t, p_.T);
  return e_eta_max_ / (t * (p_.T - t));
}

double WeightFamily::xi_minus(double t) const {
  require_open_interval(t, p_.T);
  return e_eta_min_ / (t * (p_.T - t));
}

double WeightFamily::alpha_hat(double t) const {
  return 4.0 * alpha_minus(t) - 3.0 * alpha_plus(t);
}

double WeightFamily::inv_m(double t) const {
  const double m = p_.m(t);
  if (m <= 0.0) return 1e300;  // t = T; downstream exponents clamp
  return 1.0 / m;
}

double WeightFamily::alpha_bar(double x, double t) const {
  require_closed_interval(t, p_.T);
  return (e2lk_ - std::exp(p_.lambda * p_.eta0.value(x))) * inv_m(t);
}

double WeightFamily::xi_bar(double x, double t) const {
  require_closed_interval(t, p_.T);
  return std::exp(p_.lambda * p_.eta0.value(x)) * inv_m(t);
}

double WeightFamily::alpha_bar_plus(double t) const {
  require_closed_interval(t, p_.T);
  return (e2lk_ - e_eta_min_) * inv_m(t);
}

double WeightFamily::alpha_bar_minus(double t) const {
  require_closed_interval(t, p_.T);
  return (e2lk_ - e_eta_max_) * inv_m(t);
}

double WeightFamily::alpha_hat_bar(double t) const {
  require_closed_interval(t, p_.T);
  return (e2lk_ - 4.0 * e_eta_max_ + 3.0 * e_eta_min_) * inv_m(t);
}

double WeightFamily::xi_bar_plus(double t) const {
  require_closed_interval(t, p_.T);
  return e_eta_max_ * inv_m(t);
}

double WeightFamily::xi_bar_minus(double t) const {
  require_closed_interval(t, p_.T);
  return e_eta_min_ * inv_m(t);
}

double WeightFamily::beta(double x, double t) const { return 0.5 * alpha_bar(x, t); }
double WeightFamily::beta_plus(double t) const { return 0.5 * alpha_bar_plus(t); }
double WeightFamily::beta_minus(double t) const { return 0.5 * alpha_bar_minus(t); }

double WeightFamily::log_rho(double t) const {
  const double lxb = std::log(xi_bar_plus(t));
  return clamp_exponent(2.5 * p_.s * beta_minus(t) - 0.5 * (3.0 - p_.tau_star_value) * lxb);
}

double WeightFamily::log_rho_k(int k, double t) const {
  if (k < 0 || k > 6) throw std::out_of_range("log_rho_k: k must be in 0..6");
  const double lxb = std::log(xi_bar_plus(t));
  double v = 0.0;
  if (k == 0) {
    v = 2.0 * p_.s * beta_plus(t) - 0.5 * (3.0 + p_.tau2) * lxb;
  } else if (k == 1) {
    v = p_.s * alpha_hat_bar(t) - 0.5 * p_.tau_star_value * lxb;
  } else {
    const int j = k - 2;  // 0..4
    v = p_.s * alpha_hat_bar(t) - 0.5 * (p_.tau_star_value + 8.0 + 2.0 * j) * lxb;
  }
  return clamp_exponent(v);
}

WeightSample WeightFamily::eval(double x, double t) const {
  WeightSample s;
  if (t > 0.0 && t < p_.T) {
    s.alpha = alpha(x, t);
    s.xi = xi(x, t);
    s.alpha_plus = alpha_plus(t);
    s.alpha_minus = alpha_minus(t);
    s.xi_plus = xi_plus(t);
    s.xi_minus = xi_minus(t);
    s.alpha_hat = alpha_hat(t);
  }
  s.alpha_bar = alpha_bar(x, t);
  s.xi_bar = xi_bar(x, t);
  s.alpha_bar_plus = alpha_bar_plus(t);
  s.alpha_bar_minus = alpha_bar_minus(t);
  s.alpha_hat_bar = alpha_hat_bar(t);
  s.xi_bar_plus = xi_bar_plus(t);
  s.xi_bar_minus = xi_bar_minus(t);
  s.beta = beta(x, t);
  s.beta_plus = beta_plus(t);
  s.beta_minus = beta_minus(t);
  s.log_rho = log_rho(t);
  for (int k = 0; k <= 6; ++k) s.log_rho_k[static_cast<std::size_t>(k)] = log_rho_k(k, t);
  return s;
}

bool WeightInequalityReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const InequalityCheck& c) { return c.pass; });
}

WeightInequalityReport check_weight_inequalities(const WeightFamily& w, int n_time_samples) {
  if (n_time_samples < 16)
    throw ValidationError("check_weight_inequalities: need at least 16 samples");
  const double T = w.params().T;
  const double delta = T / (n_time_samples + 1);
  std::vector<double> ts(static_cast<std::size_t>(n_time_samples));
  for (int i = 0; i < n_time_samples; ++i) ts[static_cast<std::size_t>(i)] = delta * (i + 1);

  WeightInequalityReport rep;
  auto log_w = [&](int k, double t) {  // k = -1 selects rho
    return (k < 0) ? w.log_rho(t) : w.log_rho_k(k, t);
  };

  // rho_{k+1} <= C rho_k, 0 <= k <= 5, and rho_0 <= C rho
  for (int k = -1; k <= 5; ++k) {
    double sup = -std::numeric_limits<double>::infinity();
    for (double t : ts) sup = std::max(sup, log_w(k + 1, t) - log_w(k, t));
    InequalityCheck c;
    c.name = (k < 0) ? "rho0 <= C rho"
                     : "rho" + std::to_string(k + 1) + " <= C rho" + std::to_string(k);
    c.sup_log_ratio = sup;
    c.pass = std::isfinite(sup);
    rep.checks.push_back(std::move(c));
  }

  // rho_{k+2} rho_{k+2,t} <= C rho_{k+1}^2, 0 <= k <= 4
  const double fd = T / 1.0e4;
  for (int k = 0; k <= 4; ++k) {
    double sup = -std::numeric_limits<double>::infinity();
    for (double t : ts) {
      if (t - fd <= 0.0 || t + fd >= T) continue;
      const double dlog = (log_w(k + 2, t + fd) - log_w(k + 2, t - fd)) / (2.0 * fd);
      const double log_rho_t = log_w(k + 2, t) + std::log(std::max(std::abs(dlog), 1e-300));
      sup = std::max(sup, log_w(k + 2, t) + log_rho_t - 2.0 * log_w(k + 1, t));
    }
    InequalityCheck c;
    c.name = "rho" + std::to_string(k + 2) + " rho" + std::to_string(k + 2) +
             ",t <= C rho" + std::to_string(k + 1) + "^2";
    c.sup_log_ratio = sup;
    c.pass = std::isfinite(sup);
    rep.checks.push_back(std::move(c));
  }

  // 4 beta+ < 5 beta- < (75/16) beta+ at every sample
  {
    bool ok = true;
    double worst = std::numeric_limits<double>::infinity();
    for (double t : ts) {
      const double bp = w.beta_plus(t);
      const double bm = w.beta_minus(t);
      const double left = 5.0 * bm - 4.0 * bp;
      const double right = (75.0 / 16.0) * bp - 5.0 * bm;
      worst = std::min({worst, left, right});
      ok = ok && left > 0.0 && right > 0.0;
    }
    InequalityCheck c;
    c.name = "4 beta+ < 5 beta- < (75/16) beta+";
    c.sup_log_ratio = worst;  // smallest margin, positive when the chain holds
    c.pass = ok;
    rep.checks.push_back(std::move(c));
  }
  return rep;
}

WindowConditionReport check_time_window_condition(const WeightFamily& w, double t1, double t2,
                                                  int n_samples) {
  const double T = w.params().T;
  const double s = w.params().s;
  const double tau = w.params().tau1;
  const std::array<double, 4> a_values{-2.0, 0.0, 2.0, 4.0};
  const std::array<double, 3> xs{w.params().eta0.x_lo,
                                 0.5 * (w.params().eta0.x_lo + w.params().eta0.x_hi),
                                 w.params().eta0.x_hi};
  WindowConditionReport rep;
  rep.worst_gap = -std::numeric_limits<double>::infinity();
  const double dt = T / (n_samples + 1);
  for (double a : a_values) {
    for (double x : xs) {
      auto g = [&](double t) {
        return (tau + a) * std::log(s * w.xi(x, t)) - 2.0 * s * w.alpha(x, t);
      };
      double sup_out = -std::numeric_limits<double>::infinity();
      double inf_in = std::numeric_limits<double>::infinity();
      for (int i = 1; i <= n_samples; ++i) {
        const double t = dt * i;
        const double v = g(t);
        if (t >= t1 && t <= t2)
          inf_in = std::min(inf_in, v);
        else
          sup_out = std::max(sup_out, v);
      }
      const double gap = sup_out - inf_in;
      rep.worst_gap = std::max(rep.worst_gap, gap);
      if (gap > 1e-9 * std::max(1.0, std::abs(inf_in))) rep.violations++;
    }
  }
  rep.pass = rep.violations == 0;
  return rep;
}

double carleman_I(double tau, const std::vector<FieldVector>& phi, const WeightFamily& w,
                  const Grid1D& grid, const TimeGrid& tgrid) {
  const double s = w.params().s;
  const double lambda = w.params().lambda;
  double total = 0.0;
  std::vector<double> ones(static_cast<std::size_t>(grid.n_cells), 1.0);
  for (int j = 1; j < tgrid.n_steps; ++j) {
    const double t = tgrid.times[static_cast<std::size_t>(j)];
    const FieldVector& u = phi[static_cast<std::size_t>(j)];
    const FieldVector ut =
        (phi[static_cast<std::size_t>(j)] - phi[static_cast<std::size_t>(j) - 1]) / tgrid.dt;
    FieldVector lap;
    apply_divergence_form(ones, grid, u, lap);
    const Eigen::VectorXd grad = gradient(u, grid);
    double slab = 0.0;
    for (int i = 0; i < grid.n_interior(); ++i) {
      const double x = grid.interior_x(i);
      const double xi = w.xi(x, t);
      const double al = w.alpha(x, t);
      const double base = exp_clamped((tau - 1.0) * std::log(s * xi) - 2.0 * s * al);
      const double slx = s * lambda * xi;
      const double gi = grad[i + 1];
      slab += base * (ut[i] * ut[i] + lap[i] * lap[i] + slx * slx * gi * gi +
                      slx * slx * slx * slx * u[i] * u[i]);
    }
    total += slab * grid.h * tgrid.dt;
  }
  return total;
}

ObservabilityResult estimate_observability_constant(const AdjointSolveFn& solve, const Grid1D& grid,
                                                    const TimeGrid& tgrid, double omega_a,
                                                    double omega_b, int n_random_terminals,
                                                    std::uint64_t seed) {
  if (n_random_terminals < 20)
    throw ValidationError("estimate_observability_constant: need at least 20 terminal samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = grid.n_interior();

  ObservabilityResult out;
  out.n_samples = n_random_terminals;
  for (int sample = 0; sample < n_random_terminals; ++sample) {
    FieldVector phiT(n), psiT(n);
    for (int i = 0; i < n; ++i) phiT[i] = gauss(rng);
    for (int i = 0; i < n; ++i) psiT[i] = gauss(rng);
    const double nphi = l2_norm(phiT, grid);
    const double npsi = l2_norm(psiT, grid);
    if (nphi > 0.0) phiT /= nphi;
    if (npsi > 0.0) psiT /= npsi;

    std::vector<FieldVector> phi, psi;
    solve(phiT, psiT, phi, psi);

    bool finite = true;
    for (const auto& f : phi) finite = finite && f.allFinite();
    for (const auto& f : psi) finite = finite && f.allFinite();
    if (!finite) {
      out.n_flagged++;
      continue;
    }

    double omega_integral = 0.0;
    for (int j = 0; j <= tgrid.n_steps; ++j) {
      const double wt = (j == 0 || j == tgrid.n_steps) ? 0.5 : 1.0;  // trapezoid in t
      double slab = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = grid.interior_x(i);
        if (x >= omega_a && x <= omega_b) {
          const double v = phi[static_cast<std::size_t>(j)][i];
          slab += v * v;
        }
      }
      omega_integral += wt * slab * grid.h * tgrid.dt;
    }
    const double num = grid.h * (phi[0].squaredNorm() + psi[0].squaredNorm());
    if (omega_integral < 1e-14) {
      out.n_flagged++;
      continue;
    }
    out.ratios.push_back(num / omega_integral);
  }
  out.c_obs_max = out.ratios.empty() ? 0.0 : *std::max_element(out.ratios.begin(), out.ratios.end());
  return out;
}

}  // namespace thermistor
