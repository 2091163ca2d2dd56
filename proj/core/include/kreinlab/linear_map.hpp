// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "kreinlab/spectral_grid.hpp"

#include <functional>

namespace kreinlab {

// Matrix-free map between grid fields; dense() materializes it column by column.
struct LinearMapHandle {
  grid::GridSpec grid;
  grid::Location domain = grid::Location::interior;
  grid::Location codomain = grid::Location::interior;
  std::function<CVec(const CVec&)> fn;

  int domain_size() const;
  int codomain_size() const;
  CVec apply(const CVec& x) const;
  grid::SpectralField apply(const grid::SpectralField& u) const;
  CMat dense() const;
};

}  // namespace kreinlab
