#include "thermistor/simulator.hpp"

#include "thermistor/errors.hpp"

#include <cmath>
#include <sstream>

namespace thermistor {

bool TrajectoryPair::all_finite() const {
  for (const auto& f : y)
    if (!f.allFinite()) return false;
  for (const auto& f : p)
    if (!f.allFinite()) return false;
  return true;
}

std::pair<FieldVector, FieldVector> step_nonlinear(const FieldVector& y, const FieldVector& p,
                                                   double t, double dt, const ProblemData& data,
                                                   const Grid1D& grid, const FieldVector* v_y,
                                                   const FieldVector* v_p) {
  FieldVector rhs_y, rhs_p;
  nonlinear_rhs(y, p, t, data, grid, rhs_y, rhs_p);
  if (v_y) rhs_y += *v_y;
  if (v_p) rhs_p += *v_p;

  // diffusion coefficients frozen at the current state
  std::vector<double> kappa_nodes(static_cast<std::size_t>(grid.n_cells) + 1);
  std::vector<double> sigma_nodes(static_cast<std::size_t>(grid.n_cells) + 1);
  for (int i = 0; i <= grid.n_cells; ++i) {
    const double yi = (i == 0 || i == grid.n_cells) ? 0.0 : y[i - 1];
    kappa_nodes[static_cast<std::size_t>(i)] = data.kappa(yi);
    sigma_nodes[static_cast<std::size_t>(i)] = data.sigma(yi);
    if (!(kappa_nodes[static_cast<std::size_t>(i)] > 0.0) ||
        !(sigma_nodes[static_cast<std::size_t>(i)] > 0.0))
      throw SolverError("step_nonlinear: non-positive diffusion coefficient (H5 violated)");
  }
  const auto kappa_half = half_node_coeff(kappa_nodes);
  const auto sigma_half = half_node_coeff(sigma_nodes);

  FieldVector y_next = solve_implicit_step(kappa_half, grid, dt, y + dt * rhs_y);
  FieldVector p_next = solve_implicit_step(sigma_half, grid, dt, p + dt * rhs_p);
  return {std::move(y_next), std::move(p_next)};
}

TrajectoryPair solve_forward(const ProblemData& data, const Grid1D& grid, const TimeGrid& tgrid,
                             const ControlGrid* control, ControlPlacement placement) {
  TrajectoryPair traj;
  traj.grid = grid;
  traj.tgrid = tgrid;
  traj.y.reserve(static_cast<std::size_t>(tgrid.n_steps) + 1);
  traj.p.reserve(static_cast<std::size_t>(tgrid.n_steps) + 1);
  traj.y.push_back(sample_interior(data.y0, grid));
  traj.p.push_back(sample_interior(data.p0, grid));

  for (int j = 0; j < tgrid.n_steps; ++j) {
    const double t = tgrid.times[static_cast<std::size_t>(j)];
    const FieldVector* v_y = nullptr;
    const FieldVector* v_p = nullptr;
    if (control) {
      const FieldVector& v = (*control)[static_cast<std::size_t>(j)];
      (placement == ControlPlacement::HeatEquation ? v_y : v_p) = &v;
    }
    auto [yn, pn] = step_nonlinear(traj.y.back(), traj.p.back(), t, tgrid.dt, data, grid, v_y, v_p);
    if (!yn.allFinite() || !pn.allFinite()) {
      std::ostringstream os;
      os << "solve_forward: non-finite state at step " << j + 1 << " (t = "
         << tgrid.times[static_cast<std::size_t>(j) + 1] << ")";
      throw SolverError(os.str());
    }
    traj.y.push_back(std::move(yn));
    traj.p.push_back(std::move(pn));
  }
  return traj;
}

EnergySeries energy_S(const TrajectoryPair& traj) {
  const int nt = traj.tgrid.n_steps;
  if (nt < 1) throw ValidationError("energy_S: trajectory needs at least 2 time nodes");
  EnergySeries es;
  es.times = traj.tgrid.times;
  es.S.resize(static_cast<std::size_t>(nt) + 1);
  for (auto& c : es.comp) c.resize(static_cast<std::size_t>(nt) + 1);

  const Grid1D& grid = traj.grid;
  const double dt = traj.tgrid.dt;
  for (int j = 0; j <= nt; ++j) {
    // backward differences for the time-derivative entries, forward at t = 0
    const int ja = (j == 0) ? 0 : j - 1;
    const int jb = (j == 0) ? 1 : j;
    const FieldVector yt = (traj.y[static_cast<std::size_t>(jb)] - traj.y[static_cast<std::size_t>(ja)]) / dt;
    const FieldVector pt = (traj.p[static_cast<std::size_t>(jb)] - traj.p[static_cast<std::size_t>(ja)]) / dt;
    const FieldNorms ny = norms(traj.y[static_cast<std::size_t>(j)], grid);
    const FieldNorms np = norms(traj.p[static_cast<std::size_t>(j)], grid);
    const Eigen::VectorXd gyt = gradient(yt, grid);
    const Eigen::VectorXd gpt = gradient(pt, grid);
    const double c0 = ny.l2 * ny.l2;
    const double c1 = ny.h1_semi * ny.h1_semi;
    const double c2 = ny.lap_l2 * ny.lap_l2;
    const double c3 = grid.h * gyt.squaredNorm();
    const double c4 = np.l2 * np.l2;
    const double c5 = np.h1_semi * np.h1_semi;
    const double c6 = np.lap_l2 * np.lap_l2;
    const double c7 = grid.h * gpt.squaredNorm();
    const std::array<double, 8> cs{c0, c1, c2, c3, c4, c5, c6, c7};
    double total = 0.0;
    for (int k = 0; k < 8; ++k) {
      es.comp[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = cs[static_cast<std::size_t>(k)];
      total += cs[static_cast<std::size_t>(k)];
    }
    es.S[static_cast<std::size_t>(j)] = total;
  }
  return es;
}

DecayFit fit_decay_rate(const EnergySeries& series, double t_lo, double t_hi) {
  std::vector<double> ts, logs;
  for (std::size_t j = 0; j < series.times.size(); ++j) {
    const double t = series.times[j];
    if (t < t_lo || t > t_hi) continue;
    const double s = series.S[j];
    if (!(s > 0.0)) {
      std::ostringstream os;
      os << "fit_decay_rate: S(t) <= 0 at t = " << t;
      throw ValidationError(os.str());
    }
    ts.push_back(t);
    logs.push_back(std::log(s));
  }
  if (ts.size() < 2) throw ValidationError("fit_decay_rate: window contains fewer than 2 samples");

  const double n = static_cast<double>(ts.size());
  double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0, sll = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += logs[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * logs[i];
    sll += logs[i] * logs[i];
  }
  const double denom = n * stt - st * st;
  const double slope = (n * stl - st * sl) / denom;
  const double intercept = (sl - slope * st) / n;

  double ss_res = 0.0;
  const double mean_l = sl / n;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double pred = intercept + slope * ts[i];
    ss_res += (logs[i] - pred) * (logs[i] - pred);
    ss_tot += (logs[i] - mean_l) * (logs[i] - mean_l);
  }
  DecayFit fit;
  fit.rho_hat = -slope;
  fit.c_hat = std::exp(intercept);
  fit.r2 = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

}  // namespace thermistor
