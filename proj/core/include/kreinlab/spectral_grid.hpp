// SPDX-License-Identifier: Apache-2.0
// Periodic-in-x' strip grids, FFT multipliers, Sobolev and Besov norms,
// traces and the semigroup lifting e^{-<D'>x_n}.
#pragma once

#include "kreinlab/linalg.hpp"

#include <functional>
#include <vector>

namespace kreinlab::grid {

// Tangential directions are periodic; the normal direction has
// points_normal cells, i.e. points_normal + 1 nodes on [0, normal_extent].
struct GridSpec {
  int dim = 2;
  std::vector<double> periods{2.0 * kPi};
  std::vector<int> points_tangential{16};
  int points_normal = 16;
  double normal_extent = 1.0;

  void validate() const;
  int tangential_dims() const { return dim - 1; }
  int tangential_size() const;
  int layers() const { return points_normal + 1; }
  int interior_size() const { return tangential_size() * layers(); }
  double h_normal() const { return normal_extent / points_normal; }
  // Volume of one tangential cell, prod(period / N).
  double tangential_cell() const;
  double x_normal(int j) const { return j * h_normal(); }
  // Node coordinates along tangential direction d.
  std::vector<double> tangential_axis(int d = 0) const;

  static GridSpec strip(int nt, int nn, double height = 1.0, double period = 2.0 * kPi);
  bool operator==(const GridSpec&) const = default;
};

enum class Location { interior, boundary };
enum class Component { bottom, top };

// Interior values are stored layer by layer: index = j * tangential_size() + i.
struct SpectralField {
  GridSpec grid;
  CVec values;
  Location location = Location::interior;

  static SpectralField interior(const GridSpec& g);
  static SpectralField boundary(const GridSpec& g);
  void check_shape() const;
  int size() const { return static_cast<int>(values.size()); }
  cplx& at(int i, int j) { return values(j * grid.tangential_size() + i); }
  cplx at(int i, int j) const { return values(j * grid.tangential_size() + i); }
};

// Samples on a full torus; interior fields enter through even reflection in x_n.
struct PeriodicSamples {
  std::vector<int> shape;
  std::vector<double> periods;
  CVec values;
  // 1/2 for reflected interior data so that norms refer to the original strip.
  double measure_factor = 1.0;

  double cell() const;
};

PeriodicSamples periodic_view(const SpectralField& f);

struct FourierMultiplier {
  std::function<cplx(const std::vector<double>&)> weight;
  double order = 0.0;

  static FourierMultiplier identity();
  // <xi>^s = (1 + |xi|^2)^{s/2}
  static FourierMultiplier bracket(double s);
  static FourierMultiplier radial(std::function<cplx(double)> w, double order);
};

// Radial dyadic partition built from the raised-cosine profile
// rho(t) = 1 (t<=0), (1+cos(pi t))/2 (0<t<1), 0 (t>=1), t = log2|xi|.
// phi_0 = rho(t), phi_j = rho(t-j) - rho(t-j+1); the last block absorbs
// everything above 2^{J-1}.
struct DyadicPartition {
  int count = 1;  // J_max; blocks are j = 0..count

  static DyadicPartition for_points(int n);
  static DyadicPartition for_grid(const GridSpec& g);
  double phi(int j, double abs_xi) const;
  double sum(double abs_xi) const;
  int blocks() const { return count + 1; }
};

double profile_rho(double t);

// --- one-dimensional helpers used across modules -----------------------------
// Signed wavenumbers in FFT order scaled by 2 pi / period; Nyquist is -n/2.
std::vector<double> wavenumbers(int n, double period);
// c_k = (1/n) sum_j u_j e^{-i k x_j}
CVec fourier_coefficients(const CVec& samples);
CVec from_fourier(const CVec& coeffs);
// Per flattened row-major torus index: the wave vector, and the node coordinates.
std::vector<std::vector<double>> frequency_vectors(const std::vector<int>& shape, const std::vector<double>& periods);
std::vector<std::vector<double>> torus_points(const std::vector<int>& shape, const std::vector<double>& periods);
// Spectral first derivative (Nyquist mode dropped), real antisymmetric.
RMat derivative_matrix(int n, double period);
CVec differentiate(const CVec& samples, double period, int order = 1);
// In-place n-d FFT on row-major data, unnormalized, sign -1 forward.
void fft_inplace(const std::vector<int>& shape, cplx* data, int sign);

// --- the module operations ---------------------------------------------------
SpectralField apply_multiplier(const SpectralField& f, const FourierMultiplier& m);
PeriodicSamples apply_multiplier(const PeriodicSamples& f, const FourierMultiplier& m);

double sobolev_norm(const SpectralField& f, double s);
double sobolev_norm(const PeriodicSamples& f, double s);

// Quadrature L_p norm; p = infinity gives the max over nodes.
double lp_norm(const PeriodicSamples& f, double p);

double besov_norm(const SpectralField& f, double s, double p, double q, const DyadicPartition& part);
// Individual block norms 2^{sj} ||phi_j(D) f||_{L_p}, j = 0..J.
std::vector<double> besov_blocks(const SpectralField& f, double s, double p, const DyadicPartition& part);

SpectralField trace_gamma0(const SpectralField& u, Component c = Component::bottom);
// Writes boundary values into an interior field.
void set_trace(SpectralField& u, const SpectralField& g, Component c = Component::bottom);

SpectralField lift_semigroup(const SpectralField& g);

// ||u||_{H^s} of a boundary field; for s < 0 the field is first multiplied by kappa.
double weighted_boundary_norm(const SpectralField& u, double s, const SpectralField& kappa);

// Mixed norm sum_{m<=k} ||d_n^m G||_{L_2(x_n; H^{k-m}_p)} of the semigroup lift of g,
// with the normal derivatives taken mode-wise.
double lift_mixed_norm(const SpectralField& g, int k, double p);

// Quadrature L_2 inner product (trapezoid in x_n, rectangle in x').
cplx inner_product(const SpectralField& u, const SpectralField& v);

}  // namespace kreinlab::grid
