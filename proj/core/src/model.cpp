#include "thermistor/model.hpp"

#include "thermistor/carleman.hpp"
#include "thermistor/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace thermistor {

namespace {
constexpr double kFdStep = 1e-6;
}

double CoefficientLaw::d1(double u) const {
  if (deriv1) return deriv1(u);
  return (eval(u + kFdStep) - eval(u - kFdStep)) / (2.0 * kFdStep);
}

double CoefficientLaw::d2(double u) const {
  if (deriv2) return deriv2(u);
  return (eval(u + kFdStep) - 2.0 * eval(u) + eval(u - kFdStep)) / (kFdStep * kFdStep);
}

CoefficientLaw CoefficientLaw::constant(double c) {
  CoefficientLaw law;
  law.eval = [c](double) { return c; };
  law.deriv1 = [](double) { return 0.0; };
  law.deriv2 = [](double) { return 0.0; };
  law.lower_bound = c / 2.0;
  law.upper_bound = 2.0 * c;
  law.deriv_bound = 1.0;
  return law;
}

CoefficientLaw CoefficientLaw::tanh_law(double base, double amp, double lower, double upper,
                                        double deriv_bound) {
  CoefficientLaw law;
  law.eval = [base, amp](double u) { return base + amp * std::tanh(u); };
  law.deriv1 = [amp](double u) {
    const double c = std::cosh(u);
    return amp / (c * c);
  };
  law.deriv2 = [amp](double u) {
    const double c = std::cosh(u);
    return -2.0 * amp * std::tanh(u) / (c * c);
  };
  law.lower_bound = lower;
  law.upper_bound = upper;
  law.deriv_bound = deriv_bound;
  return law;
}

CoefficientLaw CoefficientLaw::linear(double slope, double offset, double lower, double upper,
                                      double deriv_bound) {
  CoefficientLaw law;
  law.eval = [slope, offset](double u) { return slope * u + offset; };
  law.deriv1 = [slope](double) { return slope; };
  law.deriv2 = [](double) { return 0.0; };
  law.lower_bound = lower;
  law.upper_bound = upper;
  law.deriv_bound = deriv_bound;
  return law;
}

BoundaryPotential BoundaryPotential::zero() {
  BoundaryPotential z;
  auto zero_fn = [](double, double) { return 0.0; };
  z.value = zero_fn;
  z.time_deriv = zero_fn;
  z.space_grad = zero_fn;
  z.laplacian = zero_fn;
  z.grad_time_deriv = zero_fn;
  z.laplacian_time_deriv = zero_fn;
  z.decay_amp = 1.0;
  z.decay_rate = 1.0;
  return z;
}

BoundaryPotential BoundaryPotential::separable_quadratic(double eps, double gamma) {
  BoundaryPotential z;
  z.value = [eps, gamma](double x, double t) { return eps * std::exp(-gamma * t) * x * x / 2.0; };
  z.time_deriv = [eps, gamma](double x, double t) {
    return -gamma * eps * std::exp(-gamma * t) * x * x / 2.0;
  };
  z.space_grad = [eps, gamma](double x, double t) { return eps * std::exp(-gamma * t) * x; };
  z.laplacian = [eps, gamma](double, double t) { return eps * std::exp(-gamma * t); };
  z.grad_time_deriv = [eps, gamma](double x, double t) {
    return -gamma * eps * std::exp(-gamma * t) * x;
  };
  z.laplacian_time_deriv = [eps, gamma](double, double t) {
    return -gamma * eps * std::exp(-gamma * t);
  };
  z.decay_amp = std::max(1.0, eps * eps * (1.0 + gamma * gamma));
  z.decay_rate = gamma;
  return z;
}

namespace {

// C^inf step: 0 below 0, 1 above 1, with its derivative.
struct SmoothStep {
  static double f(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }
  static double fp(double u) { return u > 0.0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }
  static double value(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return f(u) / (f(u) + f(1.0 - u));
  }
  static double deriv(double u) {
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double a = f(u), b = f(1.0 - u);
    const double num = fp(u) * b + a * fp(1.0 - u);
    return num / ((a + b) * (a + b));
  }
};

}  // namespace

BoundaryPotential BoundaryPotential::separable_quadratic_cutoff(double eps, double gamma,
                                                                double T_horizon,
                                                                double ramp_frac) {
  const double ramp = ramp_frac * T_horizon;
  auto tau = [eps, gamma, T_horizon, ramp](double t) {
    return eps * std::exp(-gamma * t) * SmoothStep::value((T_horizon - t) / ramp);
  };
  auto tau_t = [eps, gamma, T_horizon, ramp](double t) {
    const double u = (T_horizon - t) / ramp;
    return eps * std::exp(-gamma * t) *
           (-gamma * SmoothStep::value(u) - SmoothStep::deriv(u) / ramp);
  };
  BoundaryPotential z;
  z.value = [tau](double x, double t) { return tau(t) * x * x / 2.0; };
  z.time_deriv = [tau_t](double x, double t) { return tau_t(t) * x * x / 2.0; };
  z.space_grad = [tau](double x, double t) { return tau(t) * x; };
  z.laplacian = [tau](double, double t) { return tau(t); };
  z.grad_time_deriv = [tau_t](double x, double t) { return tau_t(t) * x; };
  z.laplacian_time_deriv = [tau_t](double, double t) { return tau_t(t); };
  // the cutoff only sharpens the decay; the plain-profile certificate works,
  // padded for the ramp's derivative factor
  z.decay_amp = std::max(1.0, eps * eps * (1.0 + gamma * gamma) * (1.0 + 16.0 / (ramp * ramp)));
  z.decay_rate = gamma;
  return z;
}

BoundaryPotential BoundaryPotential::shifted(double offset) const {
  BoundaryPotential z = *this;
  auto shift = [offset](std::function<double(double, double)> fn) {
    return [fn = std::move(fn), offset](double x, double t) { return fn(x, t + offset); };
  };
  z.value = shift(value);
  z.time_deriv = shift(time_deriv);
  z.space_grad = shift(space_grad);
  z.laplacian = shift(laplacian);
  z.grad_time_deriv = shift(grad_time_deriv);
  z.laplacian_time_deriv = shift(laplacian_time_deriv);
  z.decay_amp = decay_amp * std::exp(-decay_rate * offset);
  return z;
}

ProblemData ProblemData::default_scenario(double data_scale, double zstar_eps, double zstar_gamma) {
  ProblemData d;
  d.x_lo = 0.0;
  d.x_hi = 1.0;
  d.T = 1.0;
  d.omega_a = 0.7;
  d.omega_b = 1.0;
  d.kappa = CoefficientLaw::tanh_law(1.0, 0.25, 0.5, 2.0, 1.0);
  d.sigma = CoefficientLaw::tanh_law(1.0, 0.25, 0.5, 2.0, 1.0);
  d.zstar = BoundaryPotential::separable_quadratic(zstar_eps, zstar_gamma);
  d.y0 = [data_scale](double x) { return data_scale * std::sin(M_PI * x); };
  d.p0 = [data_scale](double x) { return data_scale * std::sin(2.0 * M_PI * x); };
  d.f = [](double, double) { return 0.0; };
  d.g = [](double, double) { return 0.0; };
  d.x0 = 1.0;
  d.t1 = 0.25;
  d.t2 = 0.75;
  return d;
}

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const HypothesisCheck& c) { return c.passed; });
}

const HypothesisCheck* ValidationReport::find(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

void require_finite(double v, const std::string& fn, double where) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "validate_hypotheses: non-finite value of " << fn << " at sample " << where;
    throw ValidationError(os.str());
  }
}

// discrete H^3-type surrogate of z*(., t) from its analytic derivatives
double zstar_h3_sq(const BoundaryPotential& z, double t, const Grid1D& grid, bool time_derivative) {
  auto v = [&](double x) { return time_derivative ? z.time_deriv(x, t) : z.value(x, t); };
  auto gx = [&](double x) { return time_derivative ? z.grad_time_deriv(x, t) : z.space_grad(x, t); };
  auto lp = [&](double x) {
    return time_derivative ? z.laplacian_time_deriv(x, t) : z.laplacian(x, t);
  };
  double s = 0.0;
  for (int i = 0; i <= grid.n_cells; ++i) {
    const double x = grid.node(i);
    const double w = (i == 0 || i == grid.n_cells) ? 0.5 : 1.0;
    const double dx = grid.h;
    const double d3 = (lp(std::min(x + dx, grid.x_hi)) - lp(std::max(x - dx, grid.x_lo))) /
                      (std::min(x + dx, grid.x_hi) - std::max(x - dx, grid.x_lo));
    s += w * (v(x) * v(x) + gx(x) * gx(x) + lp(x) * lp(x) + d3 * d3);
  }
  return s * grid.h;
}

}  // namespace

ValidationReport validate_hypotheses(const ProblemData& data, int n_samples,
                                     const LawSampleRange& law_range) {
  if (n_samples < 2) throw ValidationError("validate_hypotheses: n_samples must be >= 2");
  ValidationReport rep;
  const Grid1D grid = Grid1D::uniform(data.x_lo, data.x_hi, std::max(16, n_samples));

  // --- coefficient laws: H4 (C^2 sampled), H5 (bounds), H6 (derivative bound)
  const std::pair<const char*, const CoefficientLaw*> laws[] = {{"kappa", &data.kappa},
                                                                {"sigma", &data.sigma}};
  for (const auto& entry : laws) {
    const std::string who = entry.first;
    const CoefficientLaw& law = *entry.second;
    double min_v = std::numeric_limits<double>::infinity();
    double max_v = -std::numeric_limits<double>::infinity();
    double worst_d = 0.0;
    double min_at = 0.0, max_at = 0.0, d_at = 0.0;
    bool smooth = true;
    for (int i = 0; i < law_range.n; ++i) {
      const double u = law_range.lo + (law_range.hi - law_range.lo) * i / (law_range.n - 1);
      const double v = law.eval(u);
      const double d1 = law.d1(u);
      const double d2 = law.d2(u);
      require_finite(v, who, u);
      smooth = smooth && std::isfinite(d1) && std::isfinite(d2);
      if (v < min_v) { min_v = v; min_at = u; }
      if (v > max_v) { max_v = v; max_at = u; }
      const double d = std::abs(d1) + std::abs(d2);
      if (d > worst_d) { worst_d = d; d_at = u; }
    }
    rep.checks.push_back({"H4(" + who + " C2)", smooth, worst_d, 0.0, d_at,
                          "first/second derivatives finite at samples"});
    const bool lower_ok = min_v >= law.lower_bound;
    const bool upper_ok = max_v <= law.upper_bound;
    rep.checks.push_back({"H5(" + who + " bounds)", lower_ok && upper_ok,
                          lower_ok ? max_v : min_v, lower_ok ? law.upper_bound : law.lower_bound,
                          lower_ok ? max_at : min_at,
                          lower_ok ? "sampled max vs upper bound" : "sampled min vs lower bound"});
    rep.checks.push_back({"H6(" + who + " deriv)", worst_d <= law.deriv_bound, worst_d,
                          law.deriv_bound, d_at, "sup |d1| + |d2| vs M"});
  }

  // --- H2/H3: sampled decay of the H^3 surrogate of z*
  {
    double worst = -std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    bool finite = true;
    for (int j = 0; j <= n_samples; ++j) {
      const double t = data.T * (3.0 * j) / n_samples;  // sample beyond the horizon too
      const double v = zstar_h3_sq(data.zstar, t, grid, false) +
                       zstar_h3_sq(data.zstar, t, grid, true);
      finite = finite && std::isfinite(v);
      const double margin = v * std::exp(data.zstar.decay_rate * t);
      if (margin > worst) { worst = margin; worst_t = t; }
    }
    rep.checks.push_back({"H2(z* regularity)", finite, worst, 0.0, worst_t,
                          "sampled H3 surrogate finite"});
    rep.checks.push_back({"H3(z* decay)", worst <= data.zstar.decay_amp, worst,
                          data.zstar.decay_amp, worst_t,
                          "sup e^{gamma t} (|z*|_{H3}^2 + |z*_t|_{H3}^2) vs C*"});
  }

  // --- H8: nonvanishing boundary gradient on [t1, t2]
  {
    double min_abs = std::numeric_limits<double>::infinity();
    double at = data.t1;
    for (int j = 0; j <= n_samples; ++j) {
      const double t = data.t1 + (data.t2 - data.t1) * j / n_samples;
      const double v = std::abs(data.zstar.space_grad(data.x0, t));
      require_finite(v, "grad z*(x0, .)", t);
      if (v < min_abs) { min_abs = v; at = t; }
    }
    rep.checks.push_back({"H8(boundary gradient)", min_abs > 1e-12, min_abs, 1e-12, at,
                          "min |grad z*(x0, t)| over [t1, t2]"});
  }

  // --- H1: sampled surrogate norms of f, g
  {
    bool ok = true;
    double worst = 0.0;
    const double dt_fd = data.T / (4.0 * n_samples);
    const std::pair<const char*, const std::function<double(double, double)>*> forcings[] = {
        {"f", &data.f}, {"g", &data.g}};
    for (const auto& entry : forcings) {
      double l2_sq = 0.0, l2t_sq = 0.0;
      for (int j = 1; j < n_samples; ++j) {
        const double t = data.T * j / n_samples;
        for (int i = 0; i < grid.n_interior(); ++i) {
          const double x = grid.interior_x(i);
          const double v = (*entry.second)(x, t);
          const double vt = ((*entry.second)(x, t + dt_fd) - (*entry.second)(x, t - dt_fd)) /
                            (2.0 * dt_fd);
          require_finite(v, entry.first, x);
          l2_sq += v * v;
          l2t_sq += vt * vt;
        }
      }
      const double total = (l2_sq + l2t_sq) * grid.h * data.T / n_samples;
      ok = ok && std::isfinite(total);
      worst = std::max(worst, total);
    }
    rep.checks.push_back({"H1(f,g in X)", ok, worst, 0.0, 0.0,
                          "sampled ||.||^2 + ||d/dt .||^2 finite; w(0) boundary values reported"});
  }

  // --- H7: z* in W^{2,inf} and grad z* in C^3, sampled surrogate
  {
    bool ok = true;
    double worst = 0.0;
    for (int j = 0; j <= n_samples; ++j) {
      const double t = data.T * j / n_samples;
      for (int i = 0; i <= grid.n_cells; ++i) {
        const double x = grid.node(i);
        for (double v : {data.zstar.value(x, t), data.zstar.space_grad(x, t),
                         data.zstar.laplacian(x, t), data.zstar.time_deriv(x, t)}) {
          ok = ok && std::isfinite(v);
          worst = std::max(worst, std::abs(v));
        }
      }
    }
    rep.checks.push_back({"H7(z* W2inf)", ok, worst, 0.0, 0.0, "sampled sup of z* derivatives"});
  }

  // --- H9: clamped-rho weighted integrability of the z* expressions
  {
    Eta0 eta = build_eta0(data.x_lo, data.x_hi, data.omega_a, data.omega_b);
    WeightFamily weights(WeightParams::make(data.T, std::move(eta)));
    double total = 0.0;
    for (int j = 1; j < n_samples; ++j) {
      const double t = data.T * j / n_samples;
      const double rho_sq = exp_clamped(2.0 * weights.log_rho(t));
      double slab = 0.0;
      for (int i = 0; i < grid.n_interior(); ++i) {
        const double x = grid.interior_x(i);
        const double gz = data.zstar.space_grad(x, t);
        const double gzt = data.zstar.grad_time_deriv(x, t);
        const double terms = gz * gz * gz * gz + gzt * gzt * gzt * gzt +
                             std::pow(data.zstar.laplacian(x, t), 2) +
                             std::pow(data.zstar.laplacian_time_deriv(x, t), 2) +
                             std::pow(data.zstar.time_deriv(x, t), 2);
        slab += terms;
      }
      total += rho_sq * slab * grid.h * data.T / n_samples;
    }
    rep.checks.push_back({"H9(weighted z* integrability)", std::isfinite(total), total, 0.0, 0.0,
                          "clamped-rho weighted norms finite"});
  }

  // --- H10: H1-surrogate finiteness of |grad z*(0)|^2 and sigma(0) lap z*(0) - z*_t(0)
  {
    FieldVector a(grid.n_interior()), b(grid.n_interior());
    const double s0 = data.sigma(0.0);
    for (int i = 0; i < grid.n_interior(); ++i) {
      const double x = grid.interior_x(i);
      const double gz = data.zstar.space_grad(x, 0.0);
      a[i] = gz * gz;
      b[i] = s0 * data.zstar.laplacian(x, 0.0) - data.zstar.time_deriv(x, 0.0);
    }
    const FieldNorms na = norms(a, grid);
    const FieldNorms nb = norms(b, grid);
    const double total = na.l2 * na.l2 + na.h1_semi * na.h1_semi + nb.l2 * nb.l2 +
                         nb.h1_semi * nb.h1_semi;
    rep.checks.push_back({"H10(initial compatibility)", std::isfinite(total), total, 0.0, 0.0,
                          "H1 surrogate norms finite"});
  }

  return rep;
}

FieldVector transform_to_homogeneous(const Eigen::VectorXd& z0_nodes, const Grid1D& grid,
                                     const BoundaryPotential& zstar) {
  if (z0_nodes.size() != grid.n_cells + 1)
    throw ValidationError("transform_to_homogeneous: z0 must live on the full node set");
  const double mismatch_lo = std::abs(z0_nodes[0] - zstar.value(grid.x_lo, 0.0));
  const double mismatch_hi = std::abs(z0_nodes[grid.n_cells] - zstar.value(grid.x_hi, 0.0));
  if (mismatch_lo > 1e-12 || mismatch_hi > 1e-12) {
    std::ostringstream os;
    os << "transform_to_homogeneous: boundary mismatch |z0 - z*| = "
       << std::max(mismatch_lo, mismatch_hi) << " exceeds 1e-12";
    throw ValidationError(os.str());
  }
  FieldVector p0(grid.n_interior());
  for (int i = 0; i < grid.n_interior(); ++i)
    p0[i] = z0_nodes[i + 1] - zstar.value(grid.interior_x(i), 0.0);
  return p0;
}

void nonlinear_rhs(const FieldVector& y, const FieldVector& p, double t, const ProblemData& data,
                   const Grid1D& grid, FieldVector& rhs_y, FieldVector& rhs_p) {
  const int n = grid.n_interior();
  rhs_y.resize(n);
  rhs_p.resize(n);
  const Eigen::VectorXd grad_p = gradient(p, grid);

  // sigma(y) at nodes (zero Dirichlet extension of y) and its half-node means
  std::vector<double> sigma_nodes(static_cast<std::size_t>(grid.n_cells) + 1);
  std::vector<double> z_nodes(static_cast<std::size_t>(grid.n_cells) + 1);
  for (int i = 0; i <= grid.n_cells; ++i) {
    const double yi = (i == 0 || i == grid.n_cells) ? 0.0 : y[i - 1];
    sigma_nodes[static_cast<std::size_t>(i)] = data.sigma(yi);
    z_nodes[static_cast<std::size_t>(i)] = data.zstar.value(grid.node(i), t);
  }
  const auto sigma_half = half_node_coeff(sigma_nodes);
  const FieldVector div_sz = divergence_of_flux(sigma_half, z_nodes, grid);

  for (int i = 0; i < n; ++i) {
    const double x = grid.interior_x(i);
    const double s = sigma_nodes[static_cast<std::size_t>(i) + 1];
    const double gp = grad_p[i + 1];
    const double gz = data.zstar.space_grad(x, t);
    rhs_y[i] = s * gp * gp + 2.0 * s * gp * gz + s * gz * gz + data.f(x, t);
    rhs_p[i] = div_sz[i] - data.zstar.time_deriv(x, t) + data.g(x, t);
  }
}

std::vector<double> sample_nodes(const std::function<double(double)>& fn, const Grid1D& grid) {
  std::vector<double> out(static_cast<std::size_t>(grid.n_cells) + 1);
  for (int i = 0; i <= grid.n_cells; ++i) out[static_cast<std::size_t>(i)] = fn(grid.node(i));
  return out;
}

FieldVector sample_interior(const std::function<double(double)>& fn, const Grid1D& grid) {
  FieldVector out(grid.n_interior());
  for (int i = 0; i < grid.n_interior(); ++i) out[i] = fn(grid.interior_x(i));
  return out;
}

}  // namespace thermistor
