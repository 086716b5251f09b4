#pragma once

// Forward time integration of the homogenized nonlinear system: implicit
// Euler diffusion with coefficients lagged one step, explicit source and
// coupling terms, one tridiagonal solve per equation per step. Also the
// energy functional S(t) and its exponential decay-rate fit.

#include "thermistor/grid.hpp"
#include "thermistor/model.hpp"

#include <array>
#include <optional>
#include <vector>

namespace thermistor {

enum class ControlPlacement { HeatEquation, PotentialEquation };

// One interior field per time step j = 0 .. n_steps-1, applied as a source on
// the step t_j -> t_{j+1}; zero outside the control region by construction.
using ControlGrid = std::vector<FieldVector>;

struct TrajectoryPair {
  Grid1D grid;
  TimeGrid tgrid;
  std::vector<FieldVector> y;  // n_steps + 1 states
  std::vector<FieldVector> p;
  bool all_finite() const;
};

// One semi-implicit step; v_y / v_p are optional additive sources.
std::pair<FieldVector, FieldVector> step_nonlinear(const FieldVector& y, const FieldVector& p,
                                                   double t, double dt, const ProblemData& data,
                                                   const Grid1D& grid,
                                                   const FieldVector* v_y = nullptr,
                                                   const FieldVector* v_p = nullptr);

TrajectoryPair solve_forward(const ProblemData& data, const Grid1D& grid, const TimeGrid& tgrid,
                             const ControlGrid* control = nullptr,
                             ControlPlacement placement = ControlPlacement::HeatEquation);

struct EnergySeries {
  std::vector<double> times;
  std::vector<double> S;
  // squared components: |y|^2, |grad y|^2, |lap y|^2, |grad y_t|^2, then the p counterparts
  std::array<std::vector<double>, 8> comp;
};

EnergySeries energy_S(const TrajectoryPair& traj);

struct DecayFit {
  double rho_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
};

// Least-squares line through (t, log S) on [t_lo, t_hi]; rho_hat = -slope.
DecayFit fit_decay_rate(const EnergySeries& series, double t_lo, double t_hi);

}  // namespace thermistor
