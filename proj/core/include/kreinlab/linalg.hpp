// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <random>
#include <vector>

namespace kreinlab {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

namespace la {

// Relative rank threshold used by every subspace routine.
inline constexpr double kRankTol = 1e-10;

// Orthonormal basis of the column span of a.
CMat orth(const CMat& a, double rel_tol = kRankTol);

// Same, but singular values are compared against abs_scale instead of the largest one.
CMat orth_scaled(const CMat& a, double abs_scale, double rel_tol = kRankTol);

// Orthonormal basis of the null space of a (columns).
CMat null_space(const CMat& a, double rel_tol = kRankTol);

// Orthogonal complement of span(q) in C^n; q need not be orthonormal.
CMat complement(const CMat& q, Eigen::Index n, double rel_tol = kRankTol);

CMat intersect(const CMat& a, const CMat& b, double rel_tol = kRankTol);

// ||P_a - P_b||_2 for orthonormal bases; 1 when dimensions differ.
double subspace_distance(const CMat& a, const CMat& b);

// Largest distance from span(a) to span(b), i.e. ||(I - P_b) a|| with a orthonormal.
double containment_defect(const CMat& a, const CMat& b);

double smallest_singular_value(const CMat& a);
double spectral_norm(const CMat& a);
// Largest singular value by power iteration on a^H a; for tall matrices where an SVD is too slow.
double power_norm(const CMat& a, int max_iter = 1000, double rel_tol = 1e-10);

CMat random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms of the fit residuals
};

// Least squares line through (x, y).
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace la
}  // namespace kreinlab
