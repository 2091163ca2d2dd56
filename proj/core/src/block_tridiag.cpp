// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/block_tridiag.hpp"

#include "kreinlab/errors.hpp"
#include "kreinlab/spectral_grid.hpp"

#include <cmath>
#include <limits>

namespace kreinlab::bt {

CVec to_modes(const CVec& layer) { return grid::fourier_coefficients(layer); }
CVec from_modes(const CVec& modes) { return grid::from_fourier(modes); }

CMat circulant(const CVec& symbol) {
  const Eigen::Index n = symbol.size();
  CVec first = from_modes(symbol) / static_cast<double>(n);
  CMat c(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = first((i - j + n) % n);
  return c;
}

CVec circulant_symbol(const CMat& c) { return static_cast<double>(c.rows()) * to_modes(c.col(0)); }

BlockTridiag BlockTridiag::zeros(int nt, int nb, bool modal) {
  if (nt < 1 || nb < 1) throw ArgumentError("BlockTridiag: empty shape");
  BlockTridiag m;
  m.nt = nt;
  m.nb = nb;
  m.modal = modal;
  if (modal) {
    m.mdiag.assign(nb, CVec::Zero(nt));
    m.mupper.assign(nb - 1, CVec::Zero(nt));
    m.mlower.assign(nb - 1, CVec::Zero(nt));
  } else {
    m.diag.assign(nb, CMat::Zero(nt, nt));
    m.upper.assign(nb - 1, CMat::Zero(nt, nt));
    m.lower.assign(nb - 1, CMat::Zero(nt, nt));
  }
  return m;
}

CMat BlockTridiag::apply(const CMat& x) const {
  if (x.rows() != size()) throw ArgumentError("BlockTridiag::apply: size mismatch");
  CMat y = CMat::Zero(x.rows(), x.cols());
  if (!modal) {
    for (int j = 0; j < nb; ++j) {
      y.middleRows(j * nt, nt) += diag[j] * x.middleRows(j * nt, nt);
      if (j + 1 < nb) y.middleRows(j * nt, nt) += upper[j] * x.middleRows((j + 1) * nt, nt);
      if (j > 0) y.middleRows(j * nt, nt) += lower[j - 1] * x.middleRows((j - 1) * nt, nt);
    }
    return y;
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<CVec> hat(nb);
    for (int j = 0; j < nb; ++j) hat[j] = to_modes(x.col(c).segment(j * nt, nt));
    for (int j = 0; j < nb; ++j) {
      CVec r = mdiag[j].cwiseProduct(hat[j]);
      if (j + 1 < nb) r += mupper[j].cwiseProduct(hat[j + 1]);
      if (j > 0) r += mlower[j - 1].cwiseProduct(hat[j - 1]);
      y.col(c).segment(j * nt, nt) = from_modes(r);
    }
  }
  return y;
}

CVec BlockTridiag::apply(const CVec& x) const {
  CMat xm = x;
  return apply(xm).col(0);
}

BlockTridiag BlockTridiag::adjoint() const {
  BlockTridiag a = zeros(nt, nb, modal);
  for (int j = 0; j < nb; ++j) {
    if (modal) {
      a.mdiag[j] = mdiag[j].conjugate();
      if (j + 1 < nb) {
        a.mupper[j] = mlower[j].conjugate();
        a.mlower[j] = mupper[j].conjugate();
      }
    } else {
      a.diag[j] = diag[j].adjoint();
      if (j + 1 < nb) {
        a.upper[j] = lower[j].adjoint();
        a.lower[j] = upper[j].adjoint();
      }
    }
  }
  return a;
}

BlockTridiag BlockTridiag::sub(int first, int count) const {
  if (first < 0 || count < 1 || first + count > nb) throw ArgumentError("BlockTridiag::sub: range");
  BlockTridiag s = zeros(nt, count, modal);
  for (int j = 0; j < count; ++j) {
    if (modal) {
      s.mdiag[j] = mdiag[first + j];
      if (j + 1 < count) {
        s.mupper[j] = mupper[first + j];
        s.mlower[j] = mlower[first + j];
      }
    } else {
      s.diag[j] = diag[first + j];
      if (j + 1 < count) {
        s.upper[j] = upper[first + j];
        s.lower[j] = lower[first + j];
      }
    }
  }
  return s;
}

BlockTridiag BlockTridiag::shifted(cplx lambda, const RVec& w) const {
  if (w.size() != size()) throw ArgumentError("BlockTridiag::shifted: weight size");
  BlockTridiag s = *this;
  for (int j = 0; j < nb; ++j) {
    const RVec wj = w.segment(j * nt, nt);
    if (modal) {
      if ((wj.array() - wj(0)).abs().maxCoeff() > 1e-12 * std::abs(wj(0)))
        throw ArgumentError("BlockTridiag::shifted: modal storage needs constant weights per block");
      s.mdiag[j].array() -= lambda * wj(0);
    } else {
      s.diag[j].diagonal().array() -= lambda * wj.array().cast<cplx>();
    }
  }
  return s;
}

CMat BlockTridiag::to_dense() const {
  const int n = size();
  if (!modal) {
    CMat d = CMat::Zero(n, n);
    for (int j = 0; j < nb; ++j) {
      d.block(j * nt, j * nt, nt, nt) = diag[j];
      if (j + 1 < nb) {
        d.block(j * nt, (j + 1) * nt, nt, nt) = upper[j];
        d.block((j + 1) * nt, j * nt, nt, nt) = lower[j];
      }
    }
    return d;
  }
  return apply(CMat(CMat::Identity(n, n)));
}

BlockTridiag BlockTridiag::densified() const {
  if (!modal) return *this;
  BlockTridiag d = zeros(nt, nb, false);
  for (int j = 0; j < nb; ++j) {
    d.diag[j] = circulant(mdiag[j]);
    if (j + 1 < nb) {
      d.upper[j] = circulant(mupper[j]);
      d.lower[j] = circulant(mlower[j]);
    }
  }
  return d;
}

namespace {

CMat adjoint_solve(const Eigen::PartialPivLU<CMat>& lu, const CMat& b) {
  // P A = L U, so A^H = U^H L^H P
  const CMat& f = lu.matrixLU();
  CMat y = f.triangularView<Eigen::Upper>().adjoint().solve(b);
  y = f.triangularView<Eigen::UnitLower>().adjoint().solve(y);
  return lu.permutationP().transpose() * y;
}

// 1-norm of the circulant with the given symbol.
double circulant_norm1(const CVec& symbol) { return from_modes(symbol).cwiseAbs().sum() / symbol.size(); }

}  // namespace

double BlockTridiag::norm1() const {
  double best = 0.0;
  for (int j = 0; j < nb; ++j) {
    double col = 0.0;
    if (modal) {
      col = circulant_norm1(mdiag[j]);
      if (j > 0) col += circulant_norm1(mupper[j - 1]);
      if (j + 1 < nb) col += circulant_norm1(mlower[j]);
    } else {
      RVec sums = diag[j].cwiseAbs().colwise().sum().transpose();
      if (j > 0) sums += upper[j - 1].cwiseAbs().colwise().sum().transpose();
      if (j + 1 < nb) sums += lower[j].cwiseAbs().colwise().sum().transpose();
      col = sums.maxCoeff();
    }
    best = std::max(best, col);
  }
  return best;
}

BlockLU::BlockLU(const BlockTridiag& m) : m_(m) {
  if (m.modal) {
    mpivots_.resize(m.nb);
    mpivots_[0] = m.mdiag[0];
    for (int j = 1; j < m.nb; ++j)
      mpivots_[j] = m.mdiag[j] - m.mlower[j - 1].cwiseProduct(m.mupper[j - 1]).cwiseQuotient(mpivots_[j - 1]);
    for (const auto& p : mpivots_)
      if ((p.array().abs() == 0.0).any() || !p.allFinite()) singular_ = true;
    return;
  }
  pivots_.reserve(m.nb);
  pivots_.emplace_back(m.diag[0]);
  for (int j = 1; j < m.nb; ++j) {
    const CMat x = pivots_[j - 1].solve(m.upper[j - 1]);
    pivots_.emplace_back(CMat(m.diag[j] - m.lower[j - 1] * x));
  }
  for (const auto& p : pivots_)
    if (!p.matrixLU().diagonal().allFinite() || (p.matrixLU().diagonal().array().abs() == 0.0).any())
      singular_ = true;
}

CMat BlockLU::solve(const CMat& b) const {
  const int nt = m_.nt, nb = m_.nb;
  if (b.rows() != m_.size()) throw ArgumentError("BlockLU::solve: size mismatch");
  if (singular_) throw SingularityError("BlockLU: singular pivot", std::numeric_limits<double>::infinity());
  CMat x(b.rows(), b.cols());
  if (m_.modal) {
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      std::vector<CVec> z(nb);
      for (int j = 0; j < nb; ++j) z[j] = to_modes(b.col(c).segment(j * nt, nt));
      for (int j = 1; j < nb; ++j)
        z[j] -= m_.mlower[j - 1].cwiseProduct(z[j - 1]).cwiseQuotient(mpivots_[j - 1]);
      z[nb - 1] = z[nb - 1].cwiseQuotient(mpivots_[nb - 1]);
      for (int j = nb - 2; j >= 0; --j)
        z[j] = (z[j] - m_.mupper[j].cwiseProduct(z[j + 1])).cwiseQuotient(mpivots_[j]);
      for (int j = 0; j < nb; ++j) x.col(c).segment(j * nt, nt) = from_modes(z[j]);
    }
    return x;
  }
  std::vector<CMat> z(nb);
  z[0] = b.middleRows(0, nt);
  for (int j = 1; j < nb; ++j) z[j] = b.middleRows(j * nt, nt) - m_.lower[j - 1] * pivots_[j - 1].solve(z[j - 1]);
  x.middleRows((nb - 1) * nt, nt) = pivots_[nb - 1].solve(z[nb - 1]);
  for (int j = nb - 2; j >= 0; --j)
    x.middleRows(j * nt, nt) = pivots_[j].solve(CMat(z[j] - m_.upper[j] * x.middleRows((j + 1) * nt, nt)));
  return x;
}

CVec BlockLU::solve(const CVec& b) const {
  CMat bm = b;
  return solve(bm).col(0);
}

CMat BlockLU::solve_adjoint(const CMat& b) const {
  const int nt = m_.nt, nb = m_.nb;
  if (b.rows() != m_.size()) throw ArgumentError("BlockLU::solve_adjoint: size mismatch");
  if (singular_) throw SingularityError("BlockLU: singular pivot", std::numeric_limits<double>::infinity());
  CMat x(b.rows(), b.cols());
  if (m_.modal) {
    // M^H = U~^H L~^H with the same pivots, conjugated
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      std::vector<CVec> y(nb);
      for (int j = 0; j < nb; ++j) y[j] = to_modes(b.col(c).segment(j * nt, nt));
      y[0] = y[0].cwiseQuotient(mpivots_[0].conjugate());
      for (int j = 1; j < nb; ++j)
        y[j] = (y[j] - m_.mupper[j - 1].conjugate().cwiseProduct(y[j - 1])).cwiseQuotient(mpivots_[j].conjugate());
      for (int j = nb - 2; j >= 0; --j)
        y[j] -= m_.mlower[j].conjugate().cwiseProduct(y[j + 1]).cwiseQuotient(mpivots_[j].conjugate());
      for (int j = 0; j < nb; ++j) x.col(c).segment(j * nt, nt) = from_modes(y[j]);
    }
    return x;
  }
  std::vector<CMat> y(nb);
  y[0] = adjoint_solve(pivots_[0], b.middleRows(0, nt));
  for (int j = 1; j < nb; ++j)
    y[j] = adjoint_solve(pivots_[j], b.middleRows(j * nt, nt) - m_.upper[j - 1].adjoint() * y[j - 1]);
  x.middleRows((nb - 1) * nt, nt) = y[nb - 1];
  for (int j = nb - 2; j >= 0; --j)
    x.middleRows(j * nt, nt) =
        y[j] - adjoint_solve(pivots_[j], m_.lower[j].adjoint() * x.middleRows((j + 1) * nt, nt));
  return x;
}

CVec BlockLU::solve_adjoint(const CVec& b) const {
  CMat bm = b;
  return solve_adjoint(bm).col(0);
}

double BlockLU::condition_estimate() const {
  if (singular_) return std::numeric_limits<double>::infinity();
  const int n = m_.size();
  CVec x = CVec::Constant(n, cplx(1.0 / n, 0.0));
  double est = 0.0;
  for (int it = 0; it < 5; ++it) {
    const CVec y = solve(x);
    if (!y.allFinite()) return std::numeric_limits<double>::infinity();
    const double e = y.cwiseAbs().sum();
    if (it > 0 && e <= est) break;
    est = e;
    CVec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = std::abs(y(i)) > 0 ? y(i) / std::abs(y(i)) : cplx(1.0, 0.0);
    const CVec z = solve_adjoint(xi);
    Eigen::Index jmax = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&jmax);
    if (zmax <= std::real(z.dot(x))) break;
    x.setZero();
    x(jmax) = 1.0;
  }
  return est * m_.norm1();
}

}  // namespace kreinlab::bt
