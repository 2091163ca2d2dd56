// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/psdo_calculus.hpp"

#include "kreinlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kreinlab::psdo {

using grid::GridSpec;
using grid::Location;
using grid::PeriodicSamples;
using grid::SpectralField;

namespace {

int total_of(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), 1, std::multiplies<int>());
}

double cell_of(const std::vector<int>& shape, const std::vector<double>& periods) {
  double c = 1;
  for (std::size_t d = 0; d < shape.size(); ++d) c *= periods[d] / shape[d];
  return c;
}

double norm2(const std::vector<double>& v) {
  double r = 0;
  for (double x : v) r += x * x;
  return std::sqrt(r);
}

double bracket(double r) { return std::sqrt(1.0 + r * r); }

// Per-dimension phase tables e^{i x_a xi_b} and multi-indices of the flattened torus.
struct Phases {
  std::vector<CMat> table;
  std::vector<std::vector<int>> multi;
};

Phases phases(const std::vector<int>& shape, const std::vector<double>& periods) {
  Phases ph;
  for (std::size_t d = 0; d < shape.size(); ++d) {
    const int n = shape[d];
    const auto k = grid::wavenumbers(n, periods[d]);
    CMat t(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) t(a, b) = std::exp(kI * (periods[d] * a / n) * k[b]);
    ph.table.push_back(std::move(t));
  }
  const int total = total_of(shape);
  ph.multi.assign(total, std::vector<int>(shape.size(), 0));
  std::vector<int> idx(shape.size(), 0);
  for (int f = 0; f < total; ++f) {
    ph.multi[f] = idx;
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return ph;
}

cplx phase_at(const Phases& ph, int x, int xi) {
  cplx e = 1.0;
  for (std::size_t d = 0; d < ph.table.size(); ++d) e *= ph.table[d](ph.multi[x][d], ph.multi[xi][d]);
  return e;
}

CVec coefficients(const std::vector<int>& shape, const CVec& u) {
  CVec c = u;
  grid::fft_inplace(shape, c.data(), -1);
  return c / static_cast<double>(c.size());
}

// Combined mollifier weight sum_j phi_j(|xi|) rho(log2(eps_j |eta|)).
double smoothing_weight(const grid::DyadicPartition& part, double delta, double abs_xi, double abs_eta) {
  double w = 0;
  for (int j = 0; j < part.blocks(); ++j) {
    const double ph = part.phi(j, abs_xi);
    if (ph == 0.0) continue;
    const double eps = std::exp2(-j * delta);
    const double t = abs_eta == 0.0 ? -1.0 : std::log2(eps * abs_eta);
    w += ph * grid::profile_rho(t);
  }
  return w;
}

// Mollifies every column of a (x torus) with the xi-dependent weight.
CMat smooth_columns(const CMat& a, const std::vector<int>& shape, const std::vector<double>& periods,
                    const std::vector<double>& abs_xi_col, double delta, const grid::DyadicPartition& part) {
  const auto eta = grid::frequency_vectors(shape, periods);
  std::vector<double> abs_eta(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) abs_eta[i] = norm2(eta[i]);
  CMat out(a.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    CVec col = a.col(c);
    grid::fft_inplace(shape, col.data(), -1);
    for (Eigen::Index i = 0; i < col.size(); ++i)
      col(i) *= smoothing_weight(part, delta, abs_xi_col[c], abs_eta[i]);
    grid::fft_inplace(shape, col.data(), +1);
    out.col(c) = col / static_cast<double>(col.size());
  }
  return out;
}

void require_same_grid(const SymbolField& a, const SymbolField& b) {
  if (a.shape != b.shape || a.periods != b.periods) throw ArgumentError("symbols live on different grids");
}

}  // namespace

// --- SymbolField ----------------------------------------------------------------

SymbolField SymbolField::sample(const std::vector<int>& shape, const std::vector<double>& periods, const Fn& f,
                                double order, SymbolKind kind) {
  if (shape.empty() || shape.size() != periods.size()) throw ArgumentError("SymbolField: malformed torus");
  SymbolField p;
  p.shape = shape;
  p.periods = periods;
  p.order = order;
  p.kind = kind;
  const auto x = grid::torus_points(shape, periods);
  const auto xi = grid::frequency_vectors(shape, periods);
  const int n = total_of(shape);
  p.values.resize(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) p.values(a, b) = f(x[a], xi[b]);
  return p;
}

SymbolField SymbolField::boundary(const GridSpec& g, const Fn& f, double order) {
  g.validate();
  return sample(g.points_tangential, g.periods, f, order, SymbolKind::boundary);
}

SymbolField SymbolField::interior(const GridSpec& g, const Fn& f, double order) {
  g.validate();
  std::vector<int> shape{2 * g.points_normal};
  std::vector<double> periods{2.0 * g.normal_extent};
  shape.insert(shape.end(), g.points_tangential.begin(), g.points_tangential.end());
  periods.insert(periods.end(), g.periods.begin(), g.periods.end());
  const double L = g.normal_extent;
  auto folded = [f, L](const std::vector<double>& x, const std::vector<double>& xi) {
    std::vector<double> y = x;
    if (y[0] > L) y[0] = 2.0 * L - y[0];
    return f(y, xi);
  };
  return sample(shape, periods, folded, order, SymbolKind::interior);
}

bool SymbolField::x_independent(double tol) const {
  for (Eigen::Index a = 1; a < values.rows(); ++a)
    if ((values.row(a) - values.row(0)).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

SymbolField SymbolField::operator*(const SymbolField& o) const {
  require_same_grid(*this, o);
  SymbolField p = *this;
  p.values = values.cwiseProduct(o.values);
  p.order = order + o.order;
  p.delta = std::max(delta, o.delta);
  p.tau = std::min(tau, o.tau);
  return p;
}

PeriodicSamples op_apply(const SymbolField& p, const PeriodicSamples& u) {
  if (u.shape != p.shape || u.periods != p.periods) throw ArgumentError("op_apply: grid mismatch");
  const CVec c = coefficients(u.shape, u.values);
  const Phases ph = phases(p.shape, p.periods);
  PeriodicSamples out = u;
  const int n = total_of(p.shape);
  for (int x = 0; x < n; ++x) {
    cplx acc = 0;
    for (int xi = 0; xi < n; ++xi) acc += p.values(x, xi) * c(xi) * phase_at(ph, x, xi);
    out.values(x) = acc;
  }
  return out;
}

SpectralField op_apply(const SymbolField& p, const SpectralField& u) {
  u.check_shape();
  if (u.location == Location::boundary) {
    if (p.kind != SymbolKind::boundary) throw ArgumentError("op_apply: boundary field needs a boundary symbol");
    SpectralField out = u;
    out.values = op_apply(p, grid::periodic_view(u)).values;
    return out;
  }
  if (p.kind != SymbolKind::interior) throw ArgumentError("op_apply: interior field needs an interior symbol");
  const PeriodicSamples r = op_apply(p, grid::periodic_view(u));
  SpectralField out = u;
  const int nt = u.grid.tangential_size();
  out.values = r.values.head(static_cast<Eigen::Index>(u.grid.layers()) * nt);
  return out;
}

SmoothedSymbol symbol_smooth(const SymbolField& p, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("symbol_smooth: delta must lie in (0, 1)");
  const auto part = grid::DyadicPartition::for_points(*std::max_element(p.shape.begin(), p.shape.end()));
  const auto xi = grid::frequency_vectors(p.shape, p.periods);
  std::vector<double> abs_xi(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) abs_xi[i] = norm2(xi[i]);
  SmoothedSymbol s{p, p};
  s.sharp.values = smooth_columns(p.values, p.shape, p.periods, abs_xi, delta, part);
  s.sharp.delta = delta;
  s.flat.values = p.values - s.sharp.values;
  s.flat.delta = delta;
  if (std::isfinite(p.tau)) s.flat.order = p.order - p.tau * delta;
  return s;
}

std::array<double, 3> symbol_estimates(const SymbolField& p) {
  const auto xi = grid::frequency_vectors(p.shape, p.periods);
  const Phases ph = phases(p.shape, p.periods);  // only the multi-indices are used
  const int n = p.points();
  std::array<double, 3> c{0, 0, 0};
  // flat index of the neighbour along axis d, or -1 across the Nyquist wrap
  auto step = [&](int f, std::size_t d, int s) {
    std::vector<int> m = ph.multi[f];
    const int nd = p.shape[d];
    const int signed_k = m[d] < nd / 2 ? m[d] : m[d] - nd;
    const int k2 = signed_k + s;
    if (k2 >= nd / 2 || k2 < -nd / 2) return -1;
    m[d] = (k2 + nd) % nd;
    int flat = 0;
    for (std::size_t e = 0; e < m.size(); ++e) flat = flat * p.shape[e] + m[e];
    return flat;
  };
  for (int f = 0; f < n; ++f) {
    const double b = bracket(norm2(xi[f]));
    c[0] = std::max(c[0], p.values.col(f).cwiseAbs().maxCoeff() / std::pow(b, p.order));
    for (std::size_t d = 0; d < p.shape.size(); ++d) {
      const double h = 2.0 * kPi / p.periods[d];
      const int up = step(f, d, 1), dn = step(f, d, -1);
      if (up >= 0) {
        const double bm = bracket(0.5 * (norm2(xi[f]) + norm2(xi[up])));
        c[1] = std::max(c[1], ((p.values.col(up) - p.values.col(f)) / h).cwiseAbs().maxCoeff() /
                                  std::pow(bm, p.order - 1));
      }
      if (up >= 0 && dn >= 0)
        c[2] = std::max(c[2], ((p.values.col(up) - 2.0 * p.values.col(f) + p.values.col(dn)) / (h * h))
                                      .cwiseAbs()
                                      .maxCoeff() /
                                  std::pow(b, p.order - 2));
    }
  }
  return c;
}

// --- band norms ---------------------------------------------------------------

std::vector<int> band_indices(const std::vector<int>& shape, const std::vector<double>& periods, int j) {
  const auto xi = grid::frequency_vectors(shape, periods);
  std::vector<int> out;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    // unpaired Nyquist modes alias under products; they are left out
    bool nyquist = false;
    for (std::size_t d = 0; d < shape.size(); ++d)
      nyquist = nyquist || std::abs(xi[i][d] * periods[d] / (2.0 * kPi)) == shape[d] / 2;
    if (nyquist) continue;
    const double r = norm2(xi[i]);
    const bool in = j == 0 ? r < 1.0 : (r >= std::exp2(j - 1) && r < std::exp2(j));
    if (in) out.push_back(static_cast<int>(i));
  }
  return out;
}

double band_norm(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                 const std::vector<double>& periods, int j, const RVec& out_weights) {
  const auto idx = band_indices(shape, periods, j);
  if (idx.empty()) return 0.0;
  const int n = total_of(shape);
  const double in_norm = std::sqrt(n * cell_of(shape, periods));
  const Phases ph = phases(shape, periods);
  const RVec sw = out_weights.cwiseSqrt();
  CMat m(out_weights.size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    CVec b(n);
    for (int x = 0; x < n; ++x) b(x) = phase_at(ph, x, idx[c]) / in_norm;
    const CVec y = op(b);
    if (y.size() != sw.size()) throw ArgumentError("band_norm: output size does not match the weights");
    m.col(static_cast<Eigen::Index>(c)) = sw.cwiseProduct(y);
  }
  return m.cols() > 64 ? la::power_norm(m) : la::spectral_norm(m);
}

OrderFit fit_band_order(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                        const std::vector<double>& periods, int j_lo, int j_hi, const RVec& out_weights) {
  OrderFit fit;
  std::vector<double> x, y;
  for (int j = j_lo; j <= j_hi; ++j) {
    const double nrm = band_norm(op, shape, periods, j, out_weights);
    fit.bands.push_back(j);
    fit.norms.push_back(nrm);
    if (nrm > 0) {
      x.push_back(j);
      y.push_back(std::log2(nrm));
    }
  }
  if (x.size() >= 2) {
    const auto lf = la::fit_line(x, y);
    fit.order = lf.slope;
    fit.rms = lf.residual;
  }
  return fit;
}

OrderFit symbol_band_order(const SymbolField& p, int j_lo, int j_hi) {
  // columns p(x, xi) e^{i x xi} directly; no transform needed
  const int n = p.points();
  const double in_norm = std::sqrt(n * cell_of(p.shape, p.periods));
  const double sw = std::sqrt(cell_of(p.shape, p.periods));
  const Phases ph = phases(p.shape, p.periods);
  OrderFit fit;
  std::vector<double> x, y;
  for (int j = j_lo; j <= j_hi; ++j) {
    const auto idx = band_indices(p.shape, p.periods, j);
    CMat m(n, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c)
      for (int r = 0; r < n; ++r) m(r, c) = p.values(r, idx[c]) * phase_at(ph, r, idx[c]) * (sw / in_norm);
    const double nrm = m.cols() > 64 ? la::power_norm(m) : la::spectral_norm(m);
    fit.bands.push_back(j);
    fit.norms.push_back(nrm);
    if (nrm > 0) {
      x.push_back(j);
      y.push_back(std::log2(nrm));
    }
  }
  if (x.size() >= 2) {
    const auto lf = la::fit_line(x, y);
    fit.order = lf.slope;
    fit.rms = lf.residual;
  }
  return fit;
}

OrderFit probe_band_order(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                          const std::vector<double>& periods, int j_lo, int j_hi, const RVec& out_weights) {
  const int n = total_of(shape);
  const double in_norm = std::sqrt(n * cell_of(shape, periods));
  const Phases ph = phases(shape, periods);
  const int last = static_cast<int>(shape.size()) - 1;
  OrderFit fit;
  std::vector<double> x, y;
  for (int j = j_lo; j <= j_hi; ++j) {
    const int m = j == 0 ? 0 : (j == 1 ? 1 : 3 << (j - 2));
    if (2 * m >= shape[last]) throw ArgumentError("probe_band_order: band above the grid resolution");
    CVec b(n);
    for (int r = 0; r < n; ++r) b(r) = ph.table[last](ph.multi[r][last], m) / in_norm;
    const CVec out = op(b);
    const double nrm = std::sqrt((out_weights.array() * out.array().abs2()).sum());
    fit.bands.push_back(j);
    fit.norms.push_back(nrm);
    if (nrm > 0) {
      x.push_back(j);
      y.push_back(std::log2(nrm));
    }
  }
  if (x.size() >= 2) {
    const auto lf = la::fit_line(x, y);
    fit.order = lf.slope;
    fit.rms = lf.residual;
  }
  return fit;
}

// --- order reducers -------------------------------------------------------------

SpectralField order_reduce(const OrderReducer& r, const SpectralField& u) {
  u.check_shape();
  if (r.direction == ReducerDirection::boundary) {
    if (u.location != Location::boundary) throw ArgumentError("order_reduce: boundary reducer needs a boundary field");
    if (r.order == 0.0) return u;
    return grid::apply_multiplier(u, grid::FourierMultiplier::bracket(r.order));
  }
  if (r.order != std::round(r.order)) throw ArgumentError("order_reduce: interior reducer needs an integer order");
  if (u.location != Location::interior) throw ArgumentError("order_reduce: interior reducer needs an interior field");
  const int steps = static_cast<int>(std::lround(r.order));
  if (steps == 0) return u;
  const GridSpec& g = u.grid;
  const int nt = g.tangential_size(), nl = g.layers();
  const double h = g.h_normal();
  const auto shape = g.points_tangential;
  const auto xi = grid::frequency_vectors(shape, g.periods);
  CMat c(nl, nt);
  for (int j = 0; j < nl; ++j) c.row(j) = coefficients(shape, u.values.segment(j * nt, nt)).transpose();
  for (int m = 0; m < nt; ++m) {
    const double b = bracket(norm2(xi[m]));
    CVec v = c.col(m);
    for (int s = 0; s < std::abs(steps); ++s) {
      if (steps > 0) {
        // (b - D+) v with v_{N+1} = 0
        CVec w(nl);
        for (int j = 0; j < nl; ++j) {
          const cplx next = j + 1 < nl ? v(j + 1) : cplx(0);
          w(j) = b * v(j) - (next - v(j)) / h;
        }
        v = w;
      } else {
        CVec w(nl);
        for (int j = nl - 1; j >= 0; --j) {
          const cplx next = j + 1 < nl ? w(j + 1) : cplx(0);
          w(j) = (v(j) + next / h) / (b + 1.0 / h);
        }
        v = w;
      }
    }
    c.col(m) = v;
  }
  SpectralField out = u;
  for (int j = 0; j < nl; ++j) {
    CVec row = c.row(j).transpose();
    grid::fft_inplace(shape, row.data(), +1);
    out.values.segment(j * nt, nt) = row;
  }
  return out;
}

// --- Poisson operators ------------------------------------------------------------

PoissonSymbolKernel PoissonSymbolKernel::sample(const GridSpec& g, const Fn& f, double order) {
  g.validate();
  if (g.dim != 2) throw ArgumentError("PoissonSymbolKernel: only two-dimensional strips are supported");
  PoissonSymbolKernel k;
  k.grid = g;
  k.order = order;
  const int nt = g.tangential_size();
  const auto x = g.tangential_axis(0);
  const auto xi = grid::wavenumbers(nt, g.periods[0]);
  for (int j = 0; j < g.layers(); ++j) {
    CMat m(nt, nt);
    for (int i = 0; i < nt; ++i)
      for (int q = 0; q < nt; ++q) m(i, q) = f(x[i], xi[q], g.x_normal(j));
    k.values.push_back(std::move(m));
  }
  return k;
}

PoissonSymbolKernel PoissonSymbolKernel::semigroup(const GridSpec& g) {
  return sample(g, [](double, double xi, double y) { return cplx(std::exp(-bracket(xi) * y)); }, 0.0);
}

SpectralField poisson_apply(const PoissonSymbolKernel& k, const SpectralField& v) {
  v.check_shape();
  if (v.location != Location::boundary || !(v.grid == k.grid)) throw ArgumentError("poisson_apply: grid mismatch");
  const GridSpec& g = k.grid;
  const int nt = g.tangential_size();
  const CVec c = grid::fourier_coefficients(v.values);
  const Phases ph = phases(g.points_tangential, g.periods);
  const CMat& e = ph.table[0];
  SpectralField out = SpectralField::interior(g);
  for (int j = 0; j < g.layers(); ++j)
    out.values.segment(j * nt, nt) = k.values[j].cwiseProduct(e) * c;
  return out;
}

std::array<double, 4> poisson_estimates(const PoissonSymbolKernel& k) {
  const GridSpec& g = k.grid;
  const int nt = g.tangential_size(), nl = g.layers();
  const double h = g.h_normal();
  const auto xi = grid::wavenumbers(nt, g.periods[0]);
  std::array<double, 4> c{0, 0, 0, 0};
  CVec f(nl), df(nl);
  for (int i = 0; i < nt; ++i)
    for (int q = 0; q < nt; ++q) {
      for (int j = 0; j < nl; ++j) f(j) = k.values[j](i, q);
      df(0) = (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2 * h);
      df(nl - 1) = (3.0 * f(nl - 1) - 4.0 * f(nl - 2) + f(nl - 3)) / (2 * h);
      for (int j = 1; j < nl - 1; ++j) df(j) = (f(j + 1) - f(j - 1)) / (2 * h);
      const double b = bracket(xi[q]);
      int slot = 0;
      for (int l = 0; l <= 1; ++l)
        for (int lp = 0; lp <= 1; ++lp, ++slot) {
          double acc = 0;
          for (int j = 0; j < nl; ++j) {
            const double w = (j == 0 || j == nl - 1) ? 0.5 * h : h;
            const double y = std::pow(g.x_normal(j), l);
            acc += w * std::norm(y * (lp ? df(j) : f(j)));
          }
          c[slot] = std::max(c[slot], std::sqrt(acc) / std::pow(b, k.order - 0.5 - l + lp));
        }
    }
  return c;
}

SmoothedKernel kernel_smooth(const PoissonSymbolKernel& k, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("kernel_smooth: delta must lie in (0, 1)");
  const GridSpec& g = k.grid;
  const int nt = g.tangential_size();
  const auto part = grid::DyadicPartition::for_points(nt);
  const auto xi = grid::wavenumbers(nt, g.periods[0]);
  std::vector<double> abs_xi(nt);
  for (int q = 0; q < nt; ++q) abs_xi[q] = std::abs(xi[q]);
  SmoothedKernel s{k, k};
  for (std::size_t j = 0; j < k.values.size(); ++j) {
    s.sharp.values[j] = smooth_columns(k.values[j], g.points_tangential, g.periods, abs_xi, delta, part);
    s.flat.values[j] = k.values[j] - s.sharp.values[j];
  }
  s.sharp.delta = s.flat.delta = delta;
  if (std::isfinite(k.tau)) s.flat.order = k.order - k.tau * delta;
  return s;
}

double poisson_operator_norm(const PoissonSymbolKernel& k, double s) {
  const GridSpec& g = k.grid;
  const int nt = g.tangential_size();
  const auto x = g.tangential_axis(0);
  const auto xi = grid::wavenumbers(nt, g.periods[0]);
  const double sigma = s + k.order - 0.5;
  const auto hs = grid::FourierMultiplier::bracket(s);
  CMat m;
  for (int q = 0; q < nt; ++q) {
    SpectralField v = SpectralField::boundary(g);
    for (int i = 0; i < nt; ++i) v.values(i) = std::exp(kI * xi[q] * x[i]);
    v.values /= std::pow(bracket(xi[q]), sigma) * std::sqrt(g.periods[0]);
    const PeriodicSamples out = grid::apply_multiplier(grid::periodic_view(poisson_apply(k, v)), hs);
    if (m.size() == 0) m.resize(out.values.size(), nt);
    m.col(q) = out.values * std::sqrt(out.measure_factor * out.cell());
  }
  return la::spectral_norm(m);
}

// --- trace operators ----------------------------------------------------------------

SpectralField trace_apply(const TraceSpec& t, const SpectralField& f_in) {
  f_in.check_shape();
  if (f_in.location != Location::interior) throw ArgumentError("trace_apply: interior field expected");
  const int r = static_cast<int>(t.normal_terms.size());
  if (r > 3) throw ArgumentError("trace_apply: normal derivatives above order 2 are not supported");
  const GridSpec& g = f_in.grid;
  if (g.layers() < r + 2) throw ArgumentError("trace_apply: normal grid too coarse for the requested class");
  SpectralField f = t.cls < 0 ? order_reduce({double(t.cls), ReducerDirection::minus_plus}, f_in) : f_in;
  const int nt = g.tangential_size();
  const double h = g.h_normal();
  SpectralField out = SpectralField::boundary(g);
  out.values.setZero();
  auto row = [&](int j) { return CVec(f.values.segment(j * nt, nt)); };
  for (int q = 0; q < r; ++q) {
    SpectralField gq = SpectralField::boundary(g);
    if (q == 0) gq.values = row(0);
    if (q == 1) gq.values = (-3.0 * row(0) + 4.0 * row(1) - row(2)) / (2 * h);
    if (q == 2) gq.values = (2.0 * row(0) - 5.0 * row(1) + 4.0 * row(2) - row(3)) / (h * h);
    out.values += op_apply(t.normal_terms[q], gq).values;
  }
  if (t.integral) {
    const PoissonSymbolKernel& k = *t.integral;
    if (!(k.grid == g)) throw ArgumentError("trace_apply: integral kernel on a different grid");
    const Phases ph = phases(g.points_tangential, g.periods);
    const CMat& e = ph.table[0];
    for (int j = 0; j < g.layers(); ++j) {
      const double w = (j == 0 || j == g.points_normal) ? 0.5 * h : h;
      const CVec c = grid::fourier_coefficients(row(j));
      out.values += w * (k.values[j].cwiseProduct(e) * c);
    }
  }
  return out;
}

// --- chart sums -----------------------------------------------------------------------

SpectralField chart_boundary_psdo(const std::vector<ChartPiece>& pieces, const SpectralField& u, bool weighted) {
  u.check_shape();
  if (u.location != Location::boundary) throw ArgumentError("chart_boundary_psdo: boundary field expected");
  if (pieces.empty()) throw ArgumentError("chart_boundary_psdo: no charts");
  const int n = u.size();
  RVec total = RVec::Zero(n);
  for (const auto& pc : pieces) {
    if (pc.phi.size() != n || pc.psi.size() != n) throw ArgumentError("chart_boundary_psdo: cutoff size mismatch");
    total += pc.phi;
  }
  if ((total.array() - 1.0).abs().maxCoeff() > 1e-8)
    throw ArgumentError("chart_boundary_psdo: partition functions do not sum to one");
  SpectralField out = SpectralField::boundary(u.grid);
  out.values.setZero();
  for (const auto& pc : pieces) {
    SpectralField w = u;
    w.values = u.values.cwiseProduct(pc.phi.cast<cplx>());
    const bool tilde = weighted && pc.chart;
    if (tilde) w = geom::tilde_pullback(w, *pc.chart, pc.component, geom::PullbackDirection::forward);
    w = op_apply(pc.p, w);
    if (tilde) w = geom::tilde_pullback(w, *pc.chart, pc.component, geom::PullbackDirection::inverse);
    out.values += w.values.cwiseProduct(pc.psi.cast<cplx>());
  }
  return out;
}

// --- composition ----------------------------------------------------------------------

CompositionReport composition_remainder(const SymbolField& p1, const SymbolField& p2, int j_lo, int j_hi) {
  require_same_grid(p1, p2);
  const SymbolField prod = p1 * p2;
  auto op = [&](const CVec& u) {
    PeriodicSamples s{p1.shape, p1.periods, u};
    return CVec(op_apply(p1, op_apply(p2, s)).values - op_apply(prod, s).values);
  };
  CompositionReport rep;
  rep.fit = fit_band_order(op, p1.shape, p1.periods, j_lo, j_hi,
                           RVec::Constant(p1.points(), cell_of(p1.shape, p1.periods)));
  rep.nominal_order = p1.order + p2.order;
  rep.required_drop = 0.8 * std::min(std::min(p1.tau, p2.tau), 1.0);
  rep.negligible = *std::max_element(rep.fit.norms.begin(), rep.fit.norms.end()) <= 1e-10;
  rep.pass = rep.negligible || rep.fit.order <= rep.nominal_order - rep.required_drop;
  return rep;
}

// --- JSON catalog ------------------------------------------------------------------------

SymbolField symbol_from_json(const std::string& text, const GridSpec& g) {
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string kind = j.value("kind", "boundary");
    if (kind != "boundary" && kind != "interior") throw ArgumentError("symbol json: unknown kind " + kind);
    const std::string fam = j.at("family").get<std::string>();
    const double order = j.value("order", 0.0);
    const double tau = j.value("tau", std::numeric_limits<double>::infinity());
    const double amp = j.value("amplitude", 0.5);
    const double value = j.value("value", 1.0);
    auto rough = [amp, tau](double x) { return std::isfinite(tau) ? 1.0 + amp * std::pow(std::abs(std::sin(x)), tau) : 1.0; };
    SymbolField::Fn f;
    double m = order;
    if (fam == "bracket") {
      f = [order](const std::vector<double>&, const std::vector<double>& xi) {
        return cplx(std::pow(bracket(norm2(xi)), order));
      };
    } else if (fam == "rough_bracket") {
      f = [order, rough](const std::vector<double>& x, const std::vector<double>& xi) {
        return cplx(rough(x.back()) * std::pow(bracket(norm2(xi)), order));
      };
    } else if (fam == "lacunary_bracket") {
      // 1 + amp/2 sum_k 2^{-k tau} cos(2^k x), C^tau uniformly; cut below the Nyquist mode
      if (!std::isfinite(tau) || tau <= 0.0) throw ArgumentError("symbol json: lacunary_bracket needs tau > 0");
      const int n = g.tangential_size();
      f = [order, amp, tau, n](const std::vector<double>& x, const std::vector<double>& xi) {
        double s = 0.0;
        for (int k = 0; (1 << k) < n / 2; ++k) s += std::pow(2.0, -k * tau) * std::cos(std::ldexp(1.0, k) * x.back());
        return cplx((1.0 + 0.5 * amp * s) * std::pow(bracket(norm2(xi)), order));
      };
    } else if (fam == "rough_derivative") {
      m = 1.0;
      f = [rough](const std::vector<double>& x, const std::vector<double>& xi) {
        return rough(x.back()) * kI * xi.back();
      };
    } else if (fam == "constant") {
      m = 0.0;
      f = [value](const std::vector<double>&, const std::vector<double>&) { return cplx(value); };
    } else if (fam == "samples") {
      const auto re = j.at("re").get<std::vector<std::vector<double>>>();
      const auto im = j.value("im", std::vector<std::vector<double>>{});
      SymbolField p = kind == "boundary" ? SymbolField::boundary(g, [](auto&, auto&) { return cplx(0); }, order)
                                         : SymbolField::interior(g, [](auto&, auto&) { return cplx(0); }, order);
      if (static_cast<Eigen::Index>(re.size()) != p.values.rows())
        throw ArgumentError("symbol json: sample rows do not match the grid");
      for (std::size_t a = 0; a < re.size(); ++a) {
        if (static_cast<Eigen::Index>(re[a].size()) != p.values.cols())
          throw ArgumentError("symbol json: sample columns do not match the grid");
        for (std::size_t b = 0; b < re[a].size(); ++b)
          p.values(a, b) = cplx(re[a][b], im.empty() ? 0.0 : im.at(a).at(b));
      }
      p.tau = tau;
      p.delta = j.value("delta", 0.0);
      return p;
    } else {
      throw ArgumentError("symbol json: unknown family " + fam);
    }
    SymbolField p = kind == "boundary" ? SymbolField::boundary(g, f, m) : SymbolField::interior(g, f, m);
    p.tau = tau;
    p.delta = j.value("delta", 0.0);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("symbol json: ") + e.what());
  }
}

}  // namespace kreinlab::psdo
