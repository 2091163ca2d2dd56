// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/linalg.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace kreinlab::la {

CMat orth(const CMat& a, double rel_tol) {
  if (a.cols() == 0 || a.rows() == 0) return CMat(a.rows(), 0);
  Eigen::BDCSVD<CMat> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return CMat(a.rows(), 0);
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  return svd.matrixU().leftCols(r);
}

CMat orth_scaled(const CMat& a, double abs_scale, double rel_tol) {
  if (a.cols() == 0 || a.rows() == 0) return CMat(a.rows(), 0);
  Eigen::BDCSVD<CMat> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double cut = rel_tol * std::max(abs_scale, s.size() ? s(0) : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  return svd.matrixU().leftCols(r);
}

CMat null_space(const CMat& a, double rel_tol) {
  const Eigen::Index n = a.cols();
  if (n == 0) return CMat(0, 0);
  if (a.rows() == 0) return CMat::Identity(n, n);
  Eigen::BDCSVD<CMat> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s(0) > 0.0)
    while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
  return svd.matrixV().rightCols(n - r);
}

CMat complement(const CMat& q, Eigen::Index n, double rel_tol) {
  if (q.cols() == 0) return CMat::Identity(n, n);
  return null_space(q.adjoint(), rel_tol);
}

CMat intersect(const CMat& a, const CMat& b, double rel_tol) {
  const Eigen::Index n = a.rows();
  if (a.cols() == 0 || b.cols() == 0) return CMat(n, 0);
  CMat qa = orth(a, rel_tol), qb = orth(b, rel_tol);
  CMat stacked(n, qa.cols() + qb.cols());
  stacked << qa, -qb;
  CMat ns = null_space(stacked, rel_tol);
  if (ns.cols() == 0) return CMat(n, 0);
  return orth(qa * ns.topRows(qa.cols()), rel_tol);
}

double spectral_norm(const CMat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<CMat> svd(a);
  return svd.singularValues()(0);
}

double power_norm(const CMat& a, int max_iter, double rel_tol) {
  if (a.size() == 0) return 0.0;
  // deterministic start with every component present
  CVec v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(1.0 + 0.37 * std::sin(1.3 * i), 0.21 * std::cos(0.7 * i));
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    CVec w = a.adjoint() * (a * v);
    const double lam = w.norm();
    if (lam == 0.0) return 0.0;
    v = w / lam;
    const double next = std::sqrt(lam);
    if (std::abs(next - est) <= rel_tol * next) return next;
    est = next;
  }
  return est;
}

double smallest_singular_value(const CMat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<CMat> svd(a);
  const auto& s = svd.singularValues();
  return s(s.size() - 1);
}

double subspace_distance(const CMat& a, const CMat& b) {
  if (a.cols() != b.cols()) return 1.0;
  if (a.cols() == 0) return 0.0;
  CMat d = a * a.adjoint() - b * b.adjoint();
  return spectral_norm(d);
}

double containment_defect(const CMat& a, const CMat& b) {
  if (a.cols() == 0) return 0.0;
  CMat r = a - b * (b.adjoint() * a);
  return spectral_norm(r);
}

CMat random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double rr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    rr += e * e;
  }
  f.residual = std::sqrt(rr / n);
  return f;
}

}  // namespace kreinlab::la
