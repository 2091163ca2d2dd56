// SPDX-License-Identifier: Apache-2.0
// Finite-dimensional extension theory: linear relations in H x H (H = C^n)
// stored as orthonormal bases, dual pairs, the correspondence between
// realizations and operators T: V -> W, and the Krein resolvent formulas.
#pragma once

#include "kreinlab/linalg.hpp"

#include <random>

namespace kreinlab::ext {

// A subspace of H x H; basis columns are (u; f) stacked, orthonormal.
struct SubspaceGraph {
  Eigen::Index n = 0;
  CMat basis;

  static SubspaceGraph span(const CMat& columns, Eigen::Index n);
  static SubspaceGraph of_matrix(const CMat& m);
  // Graph of m restricted to span(domain).
  static SubspaceGraph of_restriction(const CMat& m, const CMat& domain);

  Eigen::Index dim() const { return basis.cols(); }
  auto top() const { return basis.topRows(n); }
  auto bottom() const { return basis.bottomRows(n); }

  CMat domain() const;
  CMat range() const;
  CMat kernel() const;             // {u : (u, 0) in graph}
  CMat multivalued_part() const;   // {f : (0, f) in graph}
  bool is_operator(double tol = la::kRankTol) const;
  // n x n matrix of an operator with full domain.
  CMat operator_matrix() const;
};

double distance(const SubspaceGraph& a, const SubspaceGraph& b);
// ||(I - P_big) small||; zero when small is contained in big.
double inclusion_defect(const SubspaceGraph& small, const SubspaceGraph& big);

// graph(S*) = (J graph S)^perp with J(u, f) = (-f, u).
SubspaceGraph adjoint_relation(const SubspaceGraph& g);
// {(u, f - lambda u)}
SubspaceGraph shifted(const SubspaceGraph& g, cplx lambda);
// Dense (S - lambda)^{-1}; throws SingularityError unless it is an everywhere defined operator.
CMat resolvent_of(const SubspaceGraph& g, cplx lambda);

struct DualPair {
  SubspaceGraph a_min, a_min_prime, a_gamma;
  // derived
  SubspaceGraph a_max, a_max_prime;
  CMat a_gamma_op;  // A_gamma as an n x n matrix; A'_gamma is its adjoint
  CMat z, z_prime;  // orthonormal bases of ker A_max, ker A'_max

  static DualPair make(const SubspaceGraph& a_min, const SubspaceGraph& a_min_prime,
                       const SubspaceGraph& a_gamma);
  Eigen::Index n() const { return a_gamma.n; }

  CMat resolvent(cplx lambda) const;          // (A_gamma - lambda)^{-1}
  CMat resolvent_prime(cplx lambda) const;    // (A'_gamma - lambda)^{-1}
  CMat e_lambda(cplx lambda) const;           // I + lambda (A_gamma - lambda)^{-1}
  CMat f_lambda(cplx lambda) const;           // I - lambda A_gamma^{-1}
  CMat e_prime(cplx lambda) const;
  CMat f_prime(cplx lambda) const;
};

// T: V -> W with V in Z, W in Z'; t_matrix acts on coordinates in v_basis, w_basis.
struct Correspondence {
  SubspaceGraph t_graph;
  CMat v_basis, w_basis;
  CMat t_matrix;

  CMat kernel() const;  // ker T inside H
  CMat range() const;   // ran T inside H
};

struct Decomposition {
  CVec u_gamma, u_zeta;
};

// (u, f) in A_max; u_gamma = (A_gamma - lambda)^{-1}(f - lambda u), u_zeta = u - u_gamma.
Decomposition kernel_and_decompose(const DualPair& pair, const CVec& u, const CVec& f, cplx lambda);

Correspondence realization_to_T(const DualPair& pair, const SubspaceGraph& a_tilde);
// T^lambda: V_lambda -> W_{conj lambda}
Correspondence correspondence_at(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda);
SubspaceGraph T_to_realization(const DualPair& pair, const Correspondence& corr);

// Matrix of G^lambda_{V,W} = -pr_W lambda E^lambda inj_V in the given bases.
CMat g_lambda(const DualPair& pair, const CMat& v_basis, const CMat& w_basis, cplx lambda);

// Matrix (W -> V coordinates) of M(lambda) = pr_zeta (I - (A~ - lambda)^{-1}(A_max - lambda)) A_gamma^{-1} inj_W.
CMat m_function(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda);
CMat m_function(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda, const CMat& v_basis,
                const CMat& w_basis);

struct KreinCheck {
  double t_form = 0.0;  // relative discrepancy of the T^lambda form
  double m_form = 0.0;  // relative discrepancy of the M-function form
};

KreinCheck krein_resolvent_check(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda);

// Random pair: A_min = M on a codimension-d subspace, A'_min = M* on another,
// A_gamma = M + K with K vanishing on D(A_min) and ranging in D(A'_min)^perp.
DualPair random_dual_pair(std::mt19937_64& rng, int n, int d);
// Second difference matrix on n points; minimal domains vanish at both ends.
DualPair laplacian_pair(int n);
// Random T between random subspaces of Z and Z' of the given dimensions.
Correspondence random_correspondence(const DualPair& pair, std::mt19937_64& rng, int dim_v, int dim_w);
// Builds a Correspondence from explicit bases and matrix.
Correspondence make_correspondence(const CMat& v_basis, const CMat& w_basis, const CMat& t_matrix);

}  // namespace kreinlab::ext
