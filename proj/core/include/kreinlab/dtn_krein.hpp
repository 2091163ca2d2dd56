// SPDX-License-Identifier: Apache-2.0
// Dirichlet-to-Neumann matrices, reduced Neumann traces, Neumann-type and
// subspace realizations, the Krein resolvent route, M-functions and the
// ellipticity / regularity checks for boundary conditions.
#pragma once

#include "kreinlab/dirichlet_solver.hpp"
#include "kreinlab/elliptic_model.hpp"
#include "kreinlab/linear_map.hpp"
#include "kreinlab/psdo_calculus.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace kreinlab::dtn {

using OperatorPtr = std::shared_ptr<const ell::EllipticOperator>;

// Relative threshold on the smallest singular value of L^lambda.
inline constexpr double kEigenvalueThreshold = 1e-10;

// --- Dirichlet-to-Neumann -------------------------------------------------------

// P^lambda = chi K^lambda with the flux conormal; 2 nt x 2 nt on [bottom; top].
struct DtNHandle {
  cplx lambda;
  bool primed = false;  // built from the formal adjoint A'
  OperatorPtr op;
  CMat matrix;

  int nt() const { return static_cast<int>(matrix.rows() / 2); }
  CMat block(grid::Component to, grid::Component from) const;
  CVec apply(const CVec& phi) const { return matrix * phi; }
  // Diagonal of the block in the Fourier basis (FFT order); exact symbol for circulant blocks.
  CVec block_symbol(grid::Component to, grid::Component from) const;
};

// Columnwise: Poisson solve of every boundary unit vector followed by the flux conormal.
// Tangentially constant operators take a per-mode path. Throws SingularityError on a spectrum hit.
DtNHandle dtn_assemble(OperatorPtr op, cplx lambda, bool primed = false);
DtNHandle dtn_assemble(const ell::EllipticOperator& op, cplx lambda, bool primed = false);

// || Omega P - (Omega P')^H || / || Omega P || for P = P^lambda, P' = P'^{conj lambda}.
double dtn_adjoint_defect(const DtNHandle& p, const DtNHandle& p_primed);

// Discrete frozen-coefficient half-line DtN symbol on component c: rows are
// tangential nodes, columns are modes in FFT order.
CMat frozen_dtn_symbol(const ell::EllipticOperator& op, grid::Component c, cplx lambda);

struct SharpReport {
  psdo::OrderFit fit;            // order of P - P_sharp on the dyadic bands
  double smoothing_change = 0;   // ||Op(p_sharp) - Op(p)|| / ||Op(p)|| on random data
  double epsilon = 0.1;
  bool pass = false;             // fit.order <= 1 - epsilon
};

// P_sharp = Op(p_sharp) with p = frozen_dtn_symbol smoothed at level delta.
SharpReport dtn_sharp_approx(const DtNHandle& p, double delta, grid::Component c = grid::Component::bottom,
                             double epsilon = 0.1);

// --- reduced traces and the modified Green formula ---------------------------

enum class TraceChoice {
  flux,         // -Omega^{-1} (K u)_B
  conormal,     // one-sided s0 gamma_1 + b1 . d_tau gamma_0
  normal_part,  // s0 gamma_1 alone
};

// Gamma^lambda u = chi u - P^lambda gamma_0 u, evaluated as chi (u - K^lambda gamma_0 u).
CVec reduced_trace(const dir::ResolventHandle& r, const CVec& u, TraceChoice t = TraceChoice::flux);
// chi (A_gamma - lambda)^{-1} (A_max - lambda) u with the flux conormal.
CVec reduced_trace_via_resolvent(const dir::ResolventHandle& r, const CVec& u);
CVec conormal_of(const ell::EllipticOperator& op, const CVec& u, TraceChoice t, bool primed = false);

// |(Au, v) - (u, A'v) - sum [(Gamma^0 u, gamma_0 v) - (gamma_0 u, Gamma'^0 v)]| with trapezoid
// volume weights and one-sided conormal traces.
double modified_green_residual(const ell::EllipticOperator& op, const grid::SpectralField& u,
                               const grid::SpectralField& v, const ell::GreenOptions& opt = {});

// --- realizations --------------------------------------------------------------

enum class BoundaryKind { multiplier, tangential_derivative, psdo_symbol, dtn };

// C on one boundary component:
//   multiplier             c(x') = value + amplitude |sin(x' - shift)|^exponent
//   tangential_derivative  slope * d_t + c(x')
//   psdo_symbol            value * <xi'>^order
//   dtn                    the assembled P^0 (manufactured non-elliptic condition)
struct BoundaryOperator {
  BoundaryKind kind = BoundaryKind::multiplier;
  cplx value = 0.0;
  double amplitude = 0.0;
  double exponent = 1.0;
  double shift = 0.0;
  cplx slope = 0.0;
  double order = 1.0;

  double declared_order() const;
  // Principal (order one) symbol, excluding the dtn kind.
  cplx principal_symbol(double xi) const;
  static BoundaryOperator multiplier(cplx c);
};

enum class RealizationMode { neumann_type, subspace };
enum class ComponentSelection { both, bottom, top };

struct RealizationSpec {
  RealizationMode mode = RealizationMode::neumann_type;
  BoundaryOperator c;
  ComponentSelection component = ComponentSelection::both;
  // subspace mode: Omega-orthonormal columns on [bottom; top] and L (dy x dx, dx = dy)
  CMat x, y, l;
  // subspace mode: build X = Y = full space and L = C - P^0 when the op is known
  bool l_from_c = false;

  static RealizationSpec neumann(const BoundaryOperator& c, ComponentSelection sel = ComponentSelection::both);
  static RealizationSpec robin(cplx c) { return neumann(BoundaryOperator::multiplier(c)); }
  static RealizationSpec subspace(CMat x, CMat y, CMat l);
  // The degenerate subspace X = Y = {0}: the Dirichlet realization.
  static RealizationSpec dirichlet();
  // {mode, C: {kind, params}, component}; errors carry JSON pointers.
  static RealizationSpec from_json(const std::string& text);
};

struct SolveResult;

class Realization {
 public:
  Realization(OperatorPtr op, RealizationSpec spec);

  const ell::EllipticOperator& op() const { return *op_; }
  OperatorPtr op_ptr() const { return op_; }
  const RealizationSpec& spec() const { return spec_; }
  bool neumann_type() const { return spec_.mode == RealizationMode::neumann_type; }
  bool selected(grid::Component c) const;

  // 2 nt x 2 nt matrix of C (neumann type); rows of unselected components are zero.
  const CMat& c_matrix() const { return c_; }
  // X, Y (2 nt x d) and L = Y^H Omega (C - P^0) X for neumann type.
  const CMat& x_basis() const { return x_; }
  const CMat& y_basis() const { return y_; }
  CMat l_matrix() const;
  // P^0, kept for subspace mode
  const CMat& p0() const { return p0_; }
  // L^lambda = L + Y^H Omega (P^0 - P^lambda) X
  CMat l_lambda(const DtNHandle& p) const;

  // Direct solve of the realization matrix: (A - lambda) u = f inside and the boundary rows
  // with right-hand side eta (Y coordinates; empty means zero).
  CMat direct_solve(cplx lambda, const CMat& f_interior, const CMat& eta) const;
  grid::SpectralField direct_solve(cplx lambda, const grid::SpectralField& f) const;

 private:
  OperatorPtr op_;
  RealizationSpec spec_;
  CMat c_, x_, y_, l_;
  CMat p0_;  // subspace mode with dim X > 0
  bool l_ready_ = false;
};

// Interior rows: A u; boundary rows: chi u - C gamma_0 u on selected components and gamma_0 u elsewhere
// (subspace mode: the Y-equations followed by the Omega-coordinates of gamma_0 u off X).
LinearMapHandle realization_assemble(const Realization& r);
LinearMapHandle realization_assemble(OperatorPtr op, const RealizationSpec& spec);

struct KreinReport {
  cplx lambda;
  double discrepancy = 0.0;      // ||u_direct - u_krein|| / ||u_direct||
  double m_condition = 0.0;      // condition number of L^lambda
  double smallest_singular = 0.0;
  double h2_ratio = 0.0;         // ||u||_{H^2} / ||f||_0 of the direct solution
  bool eigenvalue = false;       // L^lambda singular: lambda is an eigenvalue of the realization
};

struct SolveResult {
  grid::SpectralField u_direct, u_krein;
  KreinReport report;
};

// (a) direct realization solve, (b) u = R f + K^lambda X rho with L^lambda rho = Y^H Omega chi R f.
SolveResult krein_solve(const Realization& r, cplx lambda, const grid::SpectralField& f);

struct MFunctionReport {
  CMat m;                       // -(L^lambda)^{-1}
  double route_discrepancy = 0; // against direct solves with boundary data
  double smallest_singular = 0;
  bool eigenvalue = false;
};

MFunctionReport m_function_pde(const Realization& r, cplx lambda);

// P^0 - P^lambda against the G-operator of the matched finite-dimensional dual pair
// (H = interior nodes in W^{1/2} coordinates, A_min = A_gamma on null(K_BI W^{-1/2})).
struct GLinkReport {
  double discrepancy = 0.0;   // relative, in the max norm
  double kernel_defect = 0.0; // distance between ker A_max and the Poisson range
  CMat from_dtn, from_pair;
};
GLinkReport g_link_check(OperatorPtr op, cplx lambda);

// --- ellipticity and regularity ---------------------------------------------------

struct EllipticityReport {
  double min_ratio = 0.0;  // min |c0 - p0| / <xi'>
  double x_at_min = 0.0, xi_at_min = 0.0;
  grid::Component component_at_min = grid::Component::bottom;
  bool pass = false;
};

// l0 = c0 - p0 over the boundary nodes and xi' = +-2^j, j = 0 .. levels; p0 the principal DtN symbol.
EllipticityReport ellipticity_check(const ell::EllipticOperator& op, const RealizationSpec& spec, int levels = 10,
                                    double tol = 1e-6);

// Discrete H^2 norm: spectral d_t, second-order differences in x_n, trapezoid weights.
double h2_norm(const ell::EllipticOperator& op, const CVec& u);

struct RegularityReport {
  std::vector<int> ladder;
  std::vector<double> ratios;  // max over the suite of ||u||_{H^2} / ||f||_0
  double spread = 0.0;         // max / min
  double growth = 0.0;         // last / first
  bool ellipticity_pass = false;
  bool bounded = false;        // spread <= 2
};

// builder(N) returns the operator at resolution N; f is white noise normalized in L2.
RegularityReport regularity_study(const std::function<OperatorPtr(int)>& builder, const RealizationSpec& spec,
                                  cplx lambda, const std::vector<int>& ladder, int samples = 3, unsigned seed = 11);

}  // namespace kreinlab::dtn
