// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/linear_map.hpp"

#include "kreinlab/errors.hpp"

namespace kreinlab {

namespace {
int size_of(const grid::GridSpec& g, grid::Location loc) {
  return loc == grid::Location::interior ? g.interior_size() : g.tangential_size();
}
}  // namespace

int LinearMapHandle::domain_size() const { return size_of(grid, domain); }
int LinearMapHandle::codomain_size() const { return size_of(grid, codomain); }

CVec LinearMapHandle::apply(const CVec& x) const {
  if (x.size() != domain_size()) throw ArgumentError("LinearMapHandle: domain size mismatch");
  return fn(x);
}

grid::SpectralField LinearMapHandle::apply(const grid::SpectralField& u) const {
  if (u.location != domain || !(u.grid == grid)) throw ArgumentError("LinearMapHandle: field does not match domain");
  grid::SpectralField out{grid, apply(u.values), codomain};
  return out;
}

CMat LinearMapHandle::dense() const {
  const int n = domain_size();
  CMat m(codomain_size(), n);
  CVec e = CVec::Zero(n);
  for (int j = 0; j < n; ++j) {
    e(j) = 1.0;
    m.col(j) = fn(e);
    e(j) = 0.0;
  }
  return m;
}

}  // namespace kreinlab
