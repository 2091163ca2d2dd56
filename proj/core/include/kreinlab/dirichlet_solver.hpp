// SPDX-License-Identifier: Apache-2.0
// Dirichlet resolvent, Poisson operator, a frozen-coefficient parametrix and
// lambda-decay sweeps along spectral rays.
#pragma once

#include "kreinlab/block_tridiag.hpp"
#include "kreinlab/elliptic_model.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace kreinlab::dir {

inline constexpr double kConditionLimit = 1e12;

// lambda = e^{i eta} mu^2 for mu in mu_values.
struct RaySpec {
  double eta = 0.75 * kPi;
  std::vector<double> mu_values{4.0, 8.0, 16.0, 32.0, 64.0};
  // pi/2 minus the largest |arg xi^T B xi| over nodes and directions
  double sector_margin = 0.0;

  // Fills sector_margin from op and validates.
  static RaySpec make(const ell::EllipticOperator& op, double eta = 0.75 * kPi,
                      std::vector<double> mu = {4.0, 8.0, 16.0, 32.0, 64.0});
  void validate() const;
  cplx lambda(double mu) const { return std::polar(mu * mu, eta); }
};

// Largest |arg Re-part sector| of the principal symbol: max |arg xi^T B(x) xi|.
double principal_sector_angle(const ell::EllipticOperator& op);

// Factorization of K_II - lambda W_II on the interior layers 1 .. N_n - 1.
class ResolventHandle {
 public:
  ResolventHandle(const ell::EllipticOperator& op, cplx lambda);
  ResolventHandle(std::shared_ptr<const ell::EllipticOperator> op, cplx lambda);

  cplx lambda() const { return lambda_; }
  double condition() const { return condition_; }
  const ell::EllipticOperator& op() const { return *op_; }
  std::shared_ptr<const ell::EllipticOperator> op_ptr() const { return op_; }
  int interior_size() const;

  // (A_gamma - lambda)^{-1} f; boundary layers of the result are zero.
  grid::SpectralField solve(const grid::SpectralField& f) const;
  // (A'_gamma - conj(lambda))^{-1} f
  grid::SpectralField solve_adjoint(const grid::SpectralField& f) const;
  // Raw interior solves with M = K_II - lambda W_II (layer-major interior vectors).
  CMat solve_interior(const CMat& rhs) const { return lu_->solve(rhs); }
  CMat solve_interior_adjoint(const CMat& rhs) const { return lu_->solve_adjoint(rhs); }

  // Poisson operator on both components: u_B = phi ([bottom; top]), (A - lambda) u = 0 inside.
  CVec poisson(const CVec& phi) const;
  CMat poisson(const CMat& phi) const;
  // Same for A' and conj(lambda).
  CMat poisson_adjoint(const CMat& phi) const;
  // Columns K_IB phi (or K^H_IB phi).
  CMat coupling(const CMat& phi, bool adjoint = false) const;

 private:
  std::shared_ptr<const ell::EllipticOperator> op_;
  cplx lambda_;
  std::shared_ptr<const bt::BlockLU> lu_;
  double condition_ = 0.0;
};

grid::SpectralField dirichlet_solve(const ell::EllipticOperator& op, cplx lambda, const grid::SpectralField& f);
// phi on component comp, zero on the other one.
grid::SpectralField poisson_solve(const ell::EllipticOperator& op, cplx lambda, const grid::SpectralField& phi,
                                  grid::Component comp = grid::Component::bottom);

// Interior-row residual max |(A - lambda) u - f| over layers 1 .. N_n - 1.
double interior_residual(const ell::EllipticOperator& op, cplx lambda, const grid::SpectralField& u,
                         const grid::SpectralField& f);

// Pairings used by the Poisson adjoint identity.
enum class Quadrature {
  discrete,    // interior node weights and the flux conormal: exact for the discrete operators
  consistent,  // trapezoid weights and one-sided conormal traces: O(h^2) consistent
};

// |<K phi, f> - <phi, chi' (A'_gamma - conj lambda)^{-1} f>| / (||phi|| ||f||), phi = [bottom; top].
double poisson_adjoint_check(const ResolventHandle& r, const CVec& phi, const grid::SpectralField& f,
                             Quadrature q = Quadrature::discrete);

// ||R(lambda)|| in the weighted L2 norm, by power iteration on R^H R.
double resolvent_norm(const ResolventHandle& r, int iterations = 40, unsigned seed = 1);
// ||K^lambda||_{L2(boundary) -> L2(strip)} from the Gram matrix of the Poisson columns.
double poisson_norm(const ResolventHandle& r);

// R(l) f - R(l') f - (l - l') R(l) R(l') f, relative to ||R(l) f||.
double resolvent_identity_residual(const ell::EllipticOperator& op, cplx l1, cplx l2, const grid::SpectralField& f);
// max(||gamma_0 K phi - phi||, ||K gamma_0 z - z||) over boundary unit vectors and a null-space
// basis z of the interior rows of A - lambda; dense, for small grids.
double homeomorphism_defect(const ResolventHandle& r);

// --- parametrix ---------------------------------------------------------------

// Root of a2 r^2 + a1 r + a0 = 0 with |r| < 1; ModelError when |r| is near 1 or no root decays.
cplx decaying_root(cplx a2, cplx a1, cplx a0);

// Frozen-coefficient half-line inverse: for each tangential node the principal part is frozen at the
// boundary point, the resulting modal recurrence is solved on the half-line with the decaying root as
// far-end condition, and the two boundary charts are glued with a raised-cosine partition in x_n.
class Parametrix {
 public:
  Parametrix(const ell::EllipticOperator& op, cplx lambda);
  // u with gamma_0 u approx phi ([bottom; top]) and (A - lambda) u approx f.
  grid::SpectralField apply(const grid::SpectralField& f, const CVec& phi) const;
  // Modal half-line response of the bottom chart frozen at tangential node i: mode m, data (0, 1).
  CVec bottom_mode_profile(int i, int m) const;

 private:
  struct Chart {
    CMat lower, diag, upper;  // nt x nt: frozen node (row) by mode (column)
    CMat root;                // decaying root of the recurrence
    RVec weight;              // node weight per frozen node
  };
  CMat solve_chart(const Chart& c, bool bottom, const std::vector<CVec>& fhat, const CVec& phihat, int i) const;

  std::shared_ptr<const ell::EllipticOperator> op_;
  cplx lambda_;
  Chart bottom_, top_;
  CMat synth_;  // synth_(i, m) = value at node i of mode m
};

grid::SpectralField parametrix_apply(const ell::EllipticOperator& op, cplx lambda, const grid::SpectralField& f,
                                     const CVec& phi);

struct ParametrixData {
  grid::SpectralField f;
  CVec phi;  // [bottom; top]
};

// Smooth random data with tangential modes |k| <= kmax: one f-only, one phi-only and one mixed pair.
std::vector<ParametrixData> parametrix_suite(const grid::GridSpec& g, unsigned seed = 7, int kmax = 8);

// ||phi||_{s,mu}: sum over both components of (1 + k^2 + mu^2)^s |phi_k|^2 times the period.
double boundary_norm_mu(const CVec& phi, const grid::GridSpec& g, double s, double mu);
// Volume L2 norm with interior node weights.
double interior_norm(const ell::EllipticOperator& op, const CVec& u);

// ||{(A - lambda) u - f, gamma_0 u - phi}|| / ||{f, phi}|| with norms ||.||_0 + ||.||_{3/2, mu}.
double parametrix_remainder(const ell::EllipticOperator& op, cplx lambda, double mu, const ParametrixData& d);

// --- sweeps -------------------------------------------------------------------

struct SweepRow {
  double mu = 0.0;
  cplx lambda;
  std::string norm_name;
  double value = 0.0;
};

struct DecayFit {
  std::vector<SweepRow> rows;
  double slope = 0.0;  // of log value against log <mu>
  double fit_residual = 0.0;
  bool monotone = true;  // no growth beyond 5% between consecutive mu
};

DecayFit fit_decay(std::vector<SweepRow> rows);
DecayFit resolvent_decay(const ell::EllipticOperator& op, const RaySpec& ray);
DecayFit poisson_decay(const ell::EllipticOperator& op, const RaySpec& ray);

struct RemainderReport {
  DecayFit fit;
  double theta = 0.0;
  double target = 0.0;  // -0.8 theta
  bool pass = false;
};

// Fits the parametrix remainder; PASS if slope <= -0.8 theta.
RemainderReport remainder_decay(const ell::EllipticOperator& op, const RaySpec& ray,
                                const std::vector<ParametrixData>& suite, double theta);

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool header = true);

}  // namespace kreinlab::dir
