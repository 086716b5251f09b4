#include "thermistor/grid.hpp"

#include "thermistor/errors.hpp"

#include <cmath>

namespace thermistor {

Grid1D Grid1D::uniform(double x_lo, double x_hi, int n_cells) {
  if (n_cells < 4) throw ValidationError("Grid1D: n_cells must be >= 4");
  if (!(x_hi > x_lo)) throw ValidationError("Grid1D: empty interval");
  Grid1D g;
  g.n_cells = n_cells;
  g.x_lo = x_lo;
  g.x_hi = x_hi;
  g.h = (x_hi - x_lo) / n_cells;
  g.nodes.resize(static_cast<std::size_t>(n_cells) + 1);
  for (int i = 0; i <= n_cells; ++i)
    g.nodes[static_cast<std::size_t>(i)] = x_lo + (x_hi - x_lo) * (static_cast<double>(i) / n_cells);
  return g;
}

TimeGrid TimeGrid::uniform(double T, int n_steps) {
  if (n_steps < 1) throw ValidationError("TimeGrid: n_steps must be >= 1");
  if (!(T > 0.0)) throw ValidationError("TimeGrid: horizon must be positive");
  TimeGrid t;
  t.n_steps = n_steps;
  t.T = T;
  t.dt = T / n_steps;
  t.times.resize(static_cast<std::size_t>(n_steps) + 1);
  for (int j = 0; j <= n_steps; ++j)
    t.times[static_cast<std::size_t>(j)] = T * (static_cast<double>(j) / n_steps);
  return t;
}

std::vector<double> half_node_coeff(const std::vector<double>& a_nodes, CoeffAverage avg) {
  const int ne = static_cast<int>(a_nodes.size()) - 1;
  std::vector<double> a_half(static_cast<std::size_t>(ne));
  for (int e = 0; e < ne; ++e) {
    const double al = a_nodes[static_cast<std::size_t>(e)];
    const double ar = a_nodes[static_cast<std::size_t>(e) + 1];
    a_half[static_cast<std::size_t>(e)] =
        (avg == CoeffAverage::Arithmetic) ? 0.5 * (al + ar) : 2.0 * al * ar / (al + ar);
  }
  return a_half;
}

Eigen::SparseMatrix<double> assemble_divergence_form(const std::vector<double>& a_nodes,
                                                     const Grid1D& grid, CoeffAverage avg) {
  for (double a : a_nodes)
    if (!(a > 0.0))
      throw ValidationError("assemble_divergence_form: non-positive coefficient (ellipticity)");
  const auto a_half = half_node_coeff(a_nodes, avg);
  const int n = grid.n_interior();
  const double h2 = grid.h * grid.h;
  Eigen::SparseMatrix<double> L(n, n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(3 * n));
  for (int i = 0; i < n; ++i) {
    // interior node i corresponds to global node i+1; adjacent edges i and i+1
    const double am = a_half[static_cast<std::size_t>(i)];
    const double ap = a_half[static_cast<std::size_t>(i) + 1];
    trips.emplace_back(i, i, (am + ap) / h2);
    if (i > 0) trips.emplace_back(i, i - 1, -am / h2);
    if (i < n - 1) trips.emplace_back(i, i + 1, -ap / h2);
  }
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

void apply_divergence_form(const std::vector<double>& a_half, const Grid1D& grid,
                           const FieldVector& u, FieldVector& out) {
  const int n = grid.n_interior();
  const double h2 = grid.h * grid.h;
  out.resize(n);
  for (int i = 0; i < n; ++i) {
    const double am = a_half[static_cast<std::size_t>(i)];
    const double ap = a_half[static_cast<std::size_t>(i) + 1];
    const double ul = (i > 0) ? u[i - 1] : 0.0;
    const double ur = (i < n - 1) ? u[i + 1] : 0.0;
    out[i] = (-(ap * (ur - u[i])) + am * (u[i] - ul)) / h2;
  }
}

FieldVector solve_implicit_step(const std::vector<double>& a_half, const Grid1D& grid,
                                double dt, const FieldVector& b) {
  const int n = grid.n_interior();
  const double r = dt / (grid.h * grid.h);
  std::vector<double> diag(static_cast<std::size_t>(n)), upper(static_cast<std::size_t>(n)),
      rhs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double am = a_half[static_cast<std::size_t>(i)];
    const double ap = a_half[static_cast<std::size_t>(i) + 1];
    diag[static_cast<std::size_t>(i)] = 1.0 + r * (am + ap);
    upper[static_cast<std::size_t>(i)] = -r * ap;
    rhs[static_cast<std::size_t>(i)] = b[i];
  }
  // Thomas sweep; the matrix is an M-matrix, no pivoting needed.
  for (int i = 1; i < n; ++i) {
    const double lower = -r * a_half[static_cast<std::size_t>(i)];
    const double w = lower / diag[static_cast<std::size_t>(i) - 1];
    diag[static_cast<std::size_t>(i)] -= w * upper[static_cast<std::size_t>(i) - 1];
    rhs[static_cast<std::size_t>(i)] -= w * rhs[static_cast<std::size_t>(i) - 1];
  }
  FieldVector x(n);
  x[n - 1] = rhs[static_cast<std::size_t>(n) - 1] / diag[static_cast<std::size_t>(n) - 1];
  for (int i = n - 2; i >= 0; --i)
    x[i] = (rhs[static_cast<std::size_t>(i)] - upper[static_cast<std::size_t>(i)] * x[i + 1]) /
           diag[static_cast<std::size_t>(i)];
  return x;
}

Eigen::VectorXd gradient(const FieldVector& u, const Grid1D& grid) {
  const int nn = grid.n_cells + 1;
  const double h = grid.h;
  Eigen::VectorXd g(nn);
  auto val = [&](int node) -> double {
    if (node <= 0 || node >= grid.n_cells) return 0.0;
    return u[node - 1];
  };
  for (int i = 1; i < grid.n_cells; ++i) g[i] = (val(i + 1) - val(i - 1)) / (2.0 * h);
  // one-sided second order at the ends
  g[0] = (-3.0 * val(0) + 4.0 * val(1) - val(2)) / (2.0 * h);
  g[grid.n_cells] =
      (3.0 * val(grid.n_cells) - 4.0 * val(grid.n_cells - 1) + val(grid.n_cells - 2)) / (2.0 * h);
  return g;
}

double l2_norm(const FieldVector& u, const Grid1D& grid) {
  return std::sqrt(grid.h * u.squaredNorm());
}

double l2_inner(const FieldVector& u, const FieldVector& v, const Grid1D& grid) {
  return grid.h * u.dot(v);
}

FieldNorms norms(const FieldVector& u, const Grid1D& grid) {
  FieldNorms out;
  out.l2 = l2_norm(u, grid);
  const Eigen::VectorXd g = gradient(u, grid);
  out.h1_semi = std::sqrt(grid.h * g.squaredNorm());
  std::vector<double> ones(static_cast<std::size_t>(grid.n_cells), 1.0);
  FieldVector lap;
  apply_divergence_form(ones, grid, u, lap);
  out.lap_l2 = l2_norm(lap, grid);
  return out;
}

double h3_sq_norm(const FieldVector& u, const Grid1D& grid) {
  const FieldNorms n0 = norms(u, grid);
  std::vector<double> ones(static_cast<std::size_t>(grid.n_cells), 1.0);
  FieldVector lap;
  apply_divergence_form(ones, grid, u, lap);
  const Eigen::VectorXd g3 = gradient(lap, grid);
  const double lap_h1_sq = grid.h * g3.squaredNorm();
  return n0.l2 * n0.l2 + n0.h1_semi * n0.h1_semi + n0.lap_l2 * n0.lap_l2 + lap_h1_sq;
}

Eigen::VectorXd edge_gradient(const FieldVector& u, const Grid1D& grid) {
  const int ne = grid.n_cells;
  Eigen::VectorXd w(ne);
  auto val = [&](int node) -> double {
    if (node <= 0 || node >= grid.n_cells) return 0.0;
    return u[node - 1];
  };
  for (int e = 0; e < ne; ++e) w[e] = (val(e + 1) - val(e)) / grid.h;
  return w;
}

Eigen::VectorXd edge_average(const FieldVector& u, const Grid1D& grid) {
  const int ne = grid.n_cells;
  Eigen::VectorXd w(ne);
  auto val = [&](int node) -> double {
    if (node <= 0 || node >= grid.n_cells) return 0.0;
    return u[node - 1];
  };
  for (int e = 0; e < ne; ++e) w[e] = 0.5 * (val(e) + val(e + 1));
  return w;
}

FieldVector node_average(const Eigen::VectorXd& w, const Grid1D& grid) {
  const int n = grid.n_interior();
  FieldVector out(n);
  for (int i = 0; i < n; ++i) out[i] = 0.5 * (w[i] + w[i + 1]);
  return out;
}

FieldVector node_divergence(const Eigen::VectorXd& w, const Grid1D& grid) {
  const int n = grid.n_interior();
  FieldVector out(n);
  for (int i = 0; i < n; ++i) out[i] = (w[i + 1] - w[i]) / grid.h;
  return out;
}

FieldVector divergence_of_flux(const std::vector<double>& a_half,
                               const std::vector<double>& z_nodes, const Grid1D& grid) {
  const int n = grid.n_interior();
  const double h2 = grid.h * grid.h;
  FieldVector out(n);
  for (int i = 0; i < n; ++i) {
    const int node = i + 1;
    const double fl = a_half[static_cast<std::size_t>(node) - 1] *
                      (z_nodes[static_cast<std::size_t>(node)] - z_nodes[static_cast<std::size_t>(node) - 1]);
    const double fr = a_half[static_cast<std::size_t>(node)] *
                      (z_nodes[static_cast<std::size_t>(node) + 1] - z_nodes[static_cast<std::size_t>(node)]);
    out[i] = (fr - fl) / h2;
  }
  return out;
}

}  // namespace thermistor
