#pragma once

// Uniform 1D finite-difference discretization: conservative divergence-form
// stencils, nodal gradients, discrete norms, and the edge calculus used by
// the linearized operators. Interior fields carry homogeneous Dirichlet
// boundary values implicitly.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace thermistor {

// Values at the n_cells-1 interior nodes; boundary values are implicit zeros.
using FieldVector = Eigen::VectorXd;

enum class CoeffAverage { Arithmetic, Harmonic };

struct Grid1D {
  int n_cells = 0;
  double x_lo = 0.0;
  double x_hi = 1.0;
  double h = 0.0;
  std::vector<double> nodes;  // n_cells + 1 coordinates

  static Grid1D uniform(double x_lo, double x_hi, int n_cells);

  int n_interior() const { return n_cells - 1; }
  double node(int i) const { return nodes[static_cast<std::size_t>(i)]; }
  // coordinate of interior unknown k (k = 0 .. n_interior()-1)
  double interior_x(int k) const { return nodes[static_cast<std::size_t>(k + 1)]; }
  // midpoint of edge e (e = 0 .. n_cells-1, between nodes e and e+1)
  double edge_x(int e) const { return 0.5 * (node(e) + node(e + 1)); }
};

struct TimeGrid {
  int n_steps = 0;
  double T = 0.0;
  double dt = 0.0;
  std::vector<double> times;  // n_steps + 1 values covering [0, T]

  static TimeGrid uniform(double T, int n_steps);
};

// Half-node coefficient from nodal samples (n_cells + 1 -> n_cells).
std::vector<double> half_node_coeff(const std::vector<double>& a_nodes,
                                    CoeffAverage avg = CoeffAverage::Arithmetic);

// Tridiagonal matrix L with (L u)_i = -[a_{i+1/2}(u_{i+1}-u_i) - a_{i-1/2}(u_i-u_{i-1})]/h^2,
// Dirichlet rows eliminated. Symmetric positive definite for positive a.
Eigen::SparseMatrix<double> assemble_divergence_form(const std::vector<double>& a_nodes,
                                                     const Grid1D& grid,
                                                     CoeffAverage avg = CoeffAverage::Arithmetic);

// Matrix-free application of the same stencil; a_half has n_cells entries.
void apply_divergence_form(const std::vector<double>& a_half, const Grid1D& grid,
                           const FieldVector& u, FieldVector& out);

// Solves (I + dt L_a) x = b by the Thomas algorithm.
FieldVector solve_implicit_step(const std::vector<double>& a_half, const Grid1D& grid,
                                double dt, const FieldVector& b);

// Nodal gradient (n_cells + 1 values): centered in the interior, one-sided
// second order at the endpoints, zero Dirichlet extension of u.
Eigen::VectorXd gradient(const FieldVector& u, const Grid1D& grid);

struct FieldNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double lap_l2 = 0.0;
};
FieldNorms norms(const FieldVector& u, const Grid1D& grid);

double l2_norm(const FieldVector& u, const Grid1D& grid);
double l2_inner(const FieldVector& u, const FieldVector& v, const Grid1D& grid);

// Discrete H^3-type surrogate: ||u||^2 + ||grad u||^2 + ||lap u||^2 + ||grad lap u||^2.
double h3_sq_norm(const FieldVector& u, const Grid1D& grid);

// Edge calculus. Edges are the n_cells midpoints; interior fields are
// zero-extended at the boundary. node_average is the transpose of
// edge_average and node_divergence the negative transpose of edge_gradient
// under the h-weighted inner products.
Eigen::VectorXd edge_gradient(const FieldVector& u, const Grid1D& grid);   // (u_{i+1}-u_i)/h
Eigen::VectorXd edge_average(const FieldVector& u, const Grid1D& grid);    // (u_i+u_{i+1})/2
FieldVector node_average(const Eigen::VectorXd& w, const Grid1D& grid);    // (w_{e-} + w_{e+})/2
FieldVector node_divergence(const Eigen::VectorXd& w, const Grid1D& grid); // (w_{e+} - w_{e-})/h

// Conservative divergence of a_half * (nodal gradient of z_nodes) where
// z_nodes includes boundary values (used for the z* terms).
FieldVector divergence_of_flux(const std::vector<double>& a_half,
                               const std::vector<double>& z_nodes, const Grid1D& grid);

}  // namespace thermistor
