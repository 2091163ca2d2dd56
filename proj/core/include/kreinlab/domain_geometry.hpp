// SPDX-License-Identifier: Apache-2.0
// Periodic strips between two graphs, the flattening map F and its
// derivative data, surface measure and pullbacks.
#pragma once

#include "kreinlab/spectral_grid.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace kreinlab::geom {

// gamma sampled on the tangential grid; smoothness class B^{M-1/2}_{p,2}.
struct BoundaryGraph {
  grid::GridSpec grid;
  RVec gamma;
  int M = 2;
  double p = 8.0;

  double tau() const { return M - 1.5 - (grid.dim - 1) / p; }
  void validate() const;

  static BoundaryGraph flat(const grid::GridSpec& g);
  // Samples f on the tangential nodes; f must be periodic.
  static BoundaryGraph from_function(const grid::GridSpec& g, const std::function<double(double)>& f, int M = 2,
                                     double p = 8.0);
};

// Values of F_n and its derivatives on a set of normal coordinates;
// every matrix is (number of normal samples) x (tangential nodes).
struct MapSamples {
  std::vector<double> xn;
  RMat f, ft, fn, ftt, ftn, fnn;
};

struct DiffeoData {
  grid::GridSpec grid;
  double lambda_scale = 1.0;
  CVec bottom_hat, top_hat;  // Fourier coefficients of the two graphs
  grid::SpectralField lift;  // Gamma_bottom(x', lambda x_n) at the grid nodes
  MapSamples nodes;          // at the grid nodes
  grid::SpectralField kappa_bottom, kappa_top;
  RVec slope_bottom, slope_top;  // gamma'

  MapSamples sample(const std::vector<double>& xn) const;
  bool is_identity() const;
};

struct StripGeometry {
  BoundaryGraph bottom, top;  // top graph is an offset from height L
  DiffeoData diffeo;

  static StripGeometry build(const BoundaryGraph& bottom, const BoundaryGraph& top);
  static StripGeometry flat(const grid::GridSpec& g);
  const grid::GridSpec& grid() const { return diffeo.grid; }
  const grid::SpectralField& kappa(grid::Component c) const {
    return c == grid::Component::bottom ? diffeo.kappa_bottom : diffeo.kappa_top;
  }
  // Interior unit normal at the boundary nodes of component c: {nu_1, nu_2} per node.
  std::array<RVec, 2> normal(grid::Component c) const;
  // Physical point F(x) for reference node (i, j).
  std::array<double, 2> point(int i, int j) const;
};

// F(x) = (x', x_n + (1 - x_n/L) Gamma_b(x', lambda x_n) + (x_n/L) Gamma_t(x', lambda (L - x_n)))
// with lambda the largest power of 1/2 keeping dF_n/dx_n >= 1/2 and lambda |d_s Gamma| <= 1/2.
DiffeoData build_diffeo(const BoundaryGraph& bottom, const BoundaryGraph& top);
DiffeoData build_diffeo(const BoundaryGraph& bottom);

// Phi = (DF)^{-T} = [[1, -F_t/J], [0, 1/J]], J = F_n.
struct PhiEntries {
  double p11, p12, p21, p22;
};
PhiEntries phi_at(const MapSamples& s, int row, int i);

// A field sampled on a uniform y_n grid over every tangential node (physical box).
struct PhysicalField {
  grid::GridSpec grid;
  double y_min = 0.0, y_max = 1.0;
  int ny = 0;
  CVec values;  // index = m * tangential_size + i

  double y(int m) const { return y_min + (y_max - y_min) * m / (ny - 1); }
  static PhysicalField sample(const StripGeometry& g, int ny, const std::function<cplx(double, double)>& f,
                              double margin = 0.05);
};

// F*u by 4-point Lagrange interpolation in y_n along each tangential column.
grid::SpectralField pullback(const PhysicalField& u, const StripGeometry& g);
// Exact pullback of a function given in physical coordinates.
grid::SpectralField pullback_function(const std::function<cplx(double, double)>& f, const StripGeometry& g);

// Reference-coordinate gradient: spectral in x', second-order differences in x_n.
std::array<grid::SpectralField, 2> reference_gradient(const grid::SpectralField& u);

// Phi grad(F* u): the pulled-back physical gradient.
std::array<grid::SpectralField, 2> transform_gradient(const PhysicalField& u, const StripGeometry& g);
std::array<grid::SpectralField, 2> transform_gradient(const grid::SpectralField& pulled, const StripGeometry& g);

struct HessianParts {
  std::array<std::array<grid::SpectralField, 2>, 2> principal;  // sum Phi_jl Phi_km d_l d_m F*u
  std::array<std::array<grid::SpectralField, 2>, 2> remainder;  // sum Phi_jl (d_l Phi_km) d_m F*u
};
HessianParts transform_hessian(const grid::SpectralField& pulled, const StripGeometry& g);
HessianParts transform_hessian(const PhysicalField& u, const StripGeometry& g);

enum class PullbackDirection { forward, inverse };
// forward: kappa * F*_0 u; inverse: the adjoint direction u / kappa.
grid::SpectralField tilde_pullback(const grid::SpectralField& u, const StripGeometry& g, grid::Component c,
                                   PullbackDirection dir);

// Hoelder data of grad F along the boundary layer: max oscillation over shifts
// delta divided by delta^t, and the exponent fitted from oscillation vs shift.
double holder_seminorm(const StripGeometry& g, double t);
double measured_holder_exponent(const StripGeometry& g);

std::string geometry_to_json(const StripGeometry& g);
StripGeometry geometry_from_json(const std::string& text, const grid::GridSpec& g);

}  // namespace kreinlab::geom
