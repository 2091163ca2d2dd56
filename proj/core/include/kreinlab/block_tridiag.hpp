// SPDX-License-Identifier: Apache-2.0
// Block tridiagonal matrices over the layers of a strip grid, either with
// dense tangential blocks or, when every block is a circulant, stored per
// Fourier mode.
#pragma once

#include "kreinlab/linalg.hpp"

#include <Eigen/LU>

#include <vector>

namespace kreinlab::bt {

struct BlockTridiag {
  int nt = 0;  // block size (tangential nodes)
  int nb = 0;  // number of block rows
  bool modal = false;
  // dense storage: diag[j] = block (j, j), upper[j] = (j, j+1), lower[j] = (j+1, j)
  std::vector<CMat> diag, upper, lower;
  // modal storage: symbols of the circulant blocks in FFT order
  std::vector<CVec> mdiag, mupper, mlower;

  static BlockTridiag zeros(int nt, int nb, bool modal);
  int size() const { return nt * nb; }

  CVec apply(const CVec& x) const;
  CMat apply(const CMat& x) const;
  BlockTridiag adjoint() const;
  // Block rows and columns first .. first + count - 1.
  BlockTridiag sub(int first, int count) const;
  // this - lambda * diag(w); in modal form w must be constant on every block.
  BlockTridiag shifted(cplx lambda, const RVec& w) const;
  CMat to_dense() const;
  // Same matrix with dense blocks.
  BlockTridiag densified() const;
  double norm1() const;
};

// Block LU without inter-block pivoting; the diagonal pivots use partial pivoting.
class BlockLU {
 public:
  explicit BlockLU(const BlockTridiag& m);

  CMat solve(const CMat& b) const;
  CVec solve(const CVec& b) const;
  CMat solve_adjoint(const CMat& b) const;
  CVec solve_adjoint(const CVec& b) const;
  // 1-norm condition number estimate (Hager-Higham).
  double condition_estimate() const;
  const BlockTridiag& matrix() const { return m_; }

 private:
  BlockTridiag m_;
  std::vector<Eigen::PartialPivLU<CMat>> pivots_;
  std::vector<CVec> mpivots_;  // modal: modified diagonal per block row
  bool singular_ = false;
};

// Circulant helpers in FFT order, shared with the assembly code.
CVec to_modes(const CVec& layer);
CVec from_modes(const CVec& modes);
// Dense circulant with the given symbol, and the symbol of a circulant.
CMat circulant(const CVec& symbol);
CVec circulant_symbol(const CMat& c);

}  // namespace kreinlab::bt
