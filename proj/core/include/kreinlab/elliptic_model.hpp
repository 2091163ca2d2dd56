// SPDX-License-Identifier: Apache-2.0
// Divergence-form operators Au = -d_j(a_jk d_k u) + a_j d_j u + a_0 u on a
// strip, their discrete sesquilinear form, conormal traces and the Green data.
#pragma once

#include "kreinlab/block_tridiag.hpp"
#include "kreinlab/domain_geometry.hpp"
#include "kreinlab/linear_map.hpp"

#include <array>
#include <functional>
#include <limits>
#include <string>

namespace kreinlab::ell {

using Mat2 = std::array<std::array<cplx, 2>, 2>;
using Vec2 = std::array<cplx, 2>;

// Coefficients as functions of the physical point (y1, y2).
struct CoefficientField {
  std::string name = "laplacian";
  std::function<Mat2(double, double)> b;
  std::function<Vec2(double, double)> a;
  std::function<cplx(double, double)> a0;
  // sum_j d_j a_j; only enters the zero-order term of the formal adjoint
  std::function<cplx(double, double)> div_a;
  double q = std::numeric_limits<double>::infinity();  // a_jk, a_j in H^1_q, a_0 in L_q

  // a'_jk = conj(a_kj), a'_j = -conj(a_j), a'_0 = conj(a_0) - sum_j d_j conj(a_j)
  CoefficientField adjoint() const;
  bool has_first_order() const;

  static CoefficientField laplacian();
  static CoefficientField constant(const Mat2& b, const Vec2& a = {0.0, 0.0}, cplx a0 = 0.0);
  // a_11 = 1 + amplitude |sin y1|^exponent, a_22 = 1
  static CoefficientField rough_a11(double amplitude = 0.3, double exponent = 1.4);
  // Returns a copy with constant first- and zero-order terms added.
  CoefficientField with_lower_order(const Vec2& a, cplx a0) const;
};

// {"name": ..., parameters}; names: laplacian, diagonal, constant, rough_a11.
CoefficientField coefficient_from_json(const std::string& text);
std::vector<std::string> coefficient_catalog();

// 1 - n/q >= tau > 0 with tau = 1/2 - (n-1)/p taken from the boundary graphs.
void check_regularity_gate(const CoefficientField& c, const geom::StripGeometry& g);

// min over grid nodes and 128 unit directions of Re xi^T B xi.
double check_strong_ellipticity(const CoefficientField& c, const geom::StripGeometry& g);
double check_strong_ellipticity(const CoefficientField& c, const grid::GridSpec& g);

struct GreenData {
  grid::Component component = grid::Component::bottom;
  CVec s0, s0_inv;
  std::array<CVec, 2> b1, b1_prime;
  CVec b0_prime;
};

GreenData green_coefficients(const CoefficientField& c, const geom::StripGeometry& g, grid::Component comp,
                             double c0);

// Node samples of the coefficients in reference coordinates:
// form(u, v) = int Bf grad u . grad conj(v) + beta . grad u conj(v) + m u conj(v) dx.
struct ReferenceCoefficients {
  std::array<CVec, 4> bf;  // tt, ts, st, ss (first index acts on v)
  std::array<CVec, 2> beta;
  CVec mass;
  bool tangentially_constant = false;
};

ReferenceCoefficients reference_coefficients(const CoefficientField& c, const geom::StripGeometry& g);
// Flux-differenced form matrix; modal storage when rc.tangentially_constant.
bt::BlockTridiag assemble_form(const ReferenceCoefficients& rc, const grid::GridSpec& gs);

// The assembled operator. `form` is the matrix K of the discrete sesquilinear form
// on all nodes (v^H K u); interior rows give A = W^{-1} K, boundary rows give the
// flux conormal derivative -Omega^{-1} K_B.
struct EllipticOperator {
  CoefficientField coeff;
  geom::StripGeometry geo;
  bt::BlockTridiag form;
  bt::BlockTridiag form_adjoint;
  RVec node_weight;  // h' h J at every node
  RVec trap_weight;  // trapezoid version (half weight on the boundary layers)
  RVec omega;        // h' kappa, bottom block then top block
  double c0 = 0.0;
  std::array<GreenData, 2> green;

  const grid::GridSpec& grid() const { return geo.grid(); }
  int nt() const { return grid().tangential_size(); }
  int layers() const { return grid().layers(); }

  // Interior rows W^{-1} K u (K^H u for the formal adjoint); the boundary rows are
  // filled by quadratic extrapolation from the three nearest interior rows.
  grid::SpectralField apply(const grid::SpectralField& u, bool adjoint = false) const;
  // -Omega^{-1} (K u)_B on both components (2 nt entries).
  CVec flux_conormal(const CVec& u, bool adjoint = false) const;
  LinearMapHandle a_max(bool adjoint = false) const;

  // Boundary node indices (bottom layer, then top layer) into the full vector.
  std::vector<int> boundary_indices() const;
};

EllipticOperator assemble(const CoefficientField& c, const geom::StripGeometry& g);
LinearMapHandle assemble_A(const CoefficientField& c, const geom::StripGeometry& g);

// chi u = s0 gamma_1 u + b1 . d_tau gamma_0 u, chi' u = conj(s0) gamma_1 u + b1' . d_tau gamma_0 u + b0' gamma_0 u,
// with gamma_1 the interior normal derivative from second-order one-sided differences.
grid::SpectralField conormal_trace(const grid::SpectralField& u, const EllipticOperator& op, grid::Component comp,
                                   bool primed = false);

struct GreenOptions {
  bool kappa = true;  // weight the boundary quadrature with the surface measure
};

// |(Au, v) - (u, A'v) - sum over components [(chi u, gamma_0 v) - (gamma_0 u, chi' v)]|
// with trapezoid volume quadrature and one-sided conormal traces.
double greens_identity_residual(const grid::SpectralField& u, const grid::SpectralField& v, const EllipticOperator& op,
                                const GreenOptions& opt = {});

// Volume pairing with trapezoid weights h' h w_j J.
cplx volume_inner(const grid::SpectralField& u, const grid::SpectralField& v, const EllipticOperator& op);
// Boundary pairing sum h' kappa u conj(v) on one component.
cplx boundary_inner(const grid::SpectralField& u, const grid::SpectralField& v, const EllipticOperator& op,
                    grid::Component comp, bool kappa = true);

// K0 phi_0 + K1 (phi_chi - chi K0 phi_0): K0 the semigroup lift, K1 psi = d e^{-<D'>d} s1^{-1} psi
// with d the distance to the component in reference coordinates and s1 = s0 kappa / J.
grid::SpectralField trace_right_inverse(const grid::SpectralField& phi_chi, const grid::SpectralField& phi_0,
                                        const EllipticOperator& op, grid::Component comp = grid::Component::bottom);

}  // namespace kreinlab::ell
