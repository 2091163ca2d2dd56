// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/spectral_grid.hpp"

#include "kreinlab/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

namespace kreinlab::grid {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// FFTW's planner is not reentrant; execution with the new-array interface is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan get_plan(const std::vector<int>& shape, int sign) {
  static std::map<std::pair<std::vector<int>, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(plan_mutex());
  auto key = std::make_pair(shape, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const int total = std::accumulate(shape.begin(), shape.end(), 1, std::multiplies<int>());
  fftw_complex* buf = fftw_alloc_complex(total);
  fftw_plan p = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), buf, buf, sign,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  cache.emplace(key, p);
  return p;
}

// Wavenumber vectors for every flattened row-major index of a torus.
std::vector<double> abs_frequencies(const std::vector<int>& shape, const std::vector<double>& periods) {
  int total = 1;
  for (int s : shape) total *= s;
  std::vector<std::vector<double>> k1;
  for (std::size_t d = 0; d < shape.size(); ++d) k1.push_back(wavenumbers(shape[d], periods[d]));
  std::vector<double> out(total);
  std::vector<int> idx(shape.size(), 0);
  for (int f = 0; f < total; ++f) {
    double r2 = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) r2 += k1[d][idx[d]] * k1[d][idx[d]];
    out[f] = std::sqrt(r2);
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

std::vector<int> tangential_shape(const GridSpec& g) { return g.points_tangential; }

double trapezoid_weight(const GridSpec& g, int j) {
  const double h = g.h_normal();
  return (j == 0 || j == g.points_normal) ? 0.5 * h : h;
}

}  // namespace

void GridSpec::validate() const {
  if (dim < 2) throw ArgumentError("grid: dim must be at least 2");
  if (static_cast<int>(periods.size()) != dim - 1 || static_cast<int>(points_tangential.size()) != dim - 1)
    throw ArgumentError("grid: need one period and one point count per tangential direction");
  for (double p : periods)
    if (!(p > 0)) throw ArgumentError("grid: periods must be positive");
  for (int n : points_tangential)
    if (n < 8 || !is_pow2(n)) throw ArgumentError("grid: tangential point counts must be powers of two >= 8");
  if (points_normal < 8) throw ArgumentError("grid: points_normal must be >= 8");
  if (!(normal_extent > 0)) throw ArgumentError("grid: normal_extent must be positive");
}

int GridSpec::tangential_size() const {
  int n = 1;
  for (int p : points_tangential) n *= p;
  return n;
}

double GridSpec::tangential_cell() const {
  double c = 1.0;
  for (std::size_t d = 0; d < periods.size(); ++d) c *= periods[d] / points_tangential[d];
  return c;
}

std::vector<double> GridSpec::tangential_axis(int d) const {
  std::vector<double> x(points_tangential.at(d));
  for (int i = 0; i < points_tangential[d]; ++i) x[i] = periods[d] * i / points_tangential[d];
  return x;
}

GridSpec GridSpec::strip(int nt, int nn, double height, double period) {
  GridSpec g;
  g.dim = 2;
  g.periods = {period};
  g.points_tangential = {nt};
  g.points_normal = nn;
  g.normal_extent = height;
  g.validate();
  return g;
}

SpectralField SpectralField::interior(const GridSpec& g) {
  g.validate();
  return {g, CVec::Zero(g.interior_size()), Location::interior};
}

SpectralField SpectralField::boundary(const GridSpec& g) {
  g.validate();
  return {g, CVec::Zero(g.tangential_size()), Location::boundary};
}

void SpectralField::check_shape() const {
  const int want = location == Location::interior ? grid.interior_size() : grid.tangential_size();
  if (values.size() != want) throw ArgumentError("field: value array does not match its grid");
}

double PeriodicSamples::cell() const {
  double c = 1.0;
  for (std::size_t d = 0; d < shape.size(); ++d) c *= periods[d] / shape[d];
  return c;
}

PeriodicSamples periodic_view(const SpectralField& f) {
  f.check_shape();
  PeriodicSamples p;
  if (f.location == Location::boundary) {
    p.shape = tangential_shape(f.grid);
    p.periods = f.grid.periods;
    p.values = f.values;
    return p;
  }
  const int nt = f.grid.tangential_size(), nn = f.grid.points_normal;
  p.shape = {2 * nn};
  p.periods = {2.0 * f.grid.normal_extent};
  for (std::size_t d = 0; d < f.grid.points_tangential.size(); ++d) {
    p.shape.push_back(f.grid.points_tangential[d]);
    p.periods.push_back(f.grid.periods[d]);
  }
  p.values.resize(2 * nn * nt);
  for (int m = 0; m < 2 * nn; ++m) {
    const int j = m <= nn ? m : 2 * nn - m;
    p.values.segment(m * nt, nt) = f.values.segment(j * nt, nt);
  }
  p.measure_factor = 0.5;
  return p;
}

FourierMultiplier FourierMultiplier::identity() {
  return {[](const std::vector<double>&) { return cplx(1.0); }, 0.0};
}

FourierMultiplier FourierMultiplier::bracket(double s) {
  return {[s](const std::vector<double>& xi) {
            double r2 = 0;
            for (double x : xi) r2 += x * x;
            return cplx(std::pow(1.0 + r2, 0.5 * s));
          },
          s};
}

FourierMultiplier FourierMultiplier::radial(std::function<cplx(double)> w, double order) {
  return {[w = std::move(w)](const std::vector<double>& xi) {
            double r2 = 0;
            for (double x : xi) r2 += x * x;
            return w(std::sqrt(r2));
          },
          order};
}

double profile_rho(double t) {
  if (t <= 0) return 1.0;
  if (t >= 1) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * t));
}

DyadicPartition DyadicPartition::for_points(int n) {
  DyadicPartition p;
  p.count = std::max(1, static_cast<int>(std::lround(std::log2(std::max(2, n) / 2.0))));
  return p;
}

DyadicPartition DyadicPartition::for_grid(const GridSpec& g) {
  return for_points(*std::max_element(g.points_tangential.begin(), g.points_tangential.end()));
}

double DyadicPartition::phi(int j, double abs_xi) const {
  const double t = abs_xi > 0 ? std::log2(abs_xi) : -std::numeric_limits<double>::infinity();
  if (j == 0) return profile_rho(t);
  if (j == count) return 1.0 - profile_rho(t - j + 1);
  if (j < 0 || j > count) return 0.0;
  return profile_rho(t - j) - profile_rho(t - j + 1);
}

double DyadicPartition::sum(double abs_xi) const {
  double s = 0;
  for (int j = 0; j <= count; ++j) s += phi(j, abs_xi);
  return s;
}

std::vector<double> wavenumbers(int n, double period) {
  std::vector<double> k(n);
  const double scale = 2.0 * kPi / period;
  for (int i = 0; i < n; ++i) k[i] = scale * (i < n / 2 ? i : i - n);
  return k;
}

std::vector<std::vector<double>> frequency_vectors(const std::vector<int>& shape,
                                                   const std::vector<double>& periods) {
  int total = 1;
  for (int s : shape) total *= s;
  std::vector<std::vector<double>> k1;
  for (std::size_t d = 0; d < shape.size(); ++d) k1.push_back(wavenumbers(shape[d], periods[d]));
  std::vector<std::vector<double>> out(total, std::vector<double>(shape.size()));
  std::vector<int> idx(shape.size(), 0);
  for (int f = 0; f < total; ++f) {
    for (std::size_t d = 0; d < shape.size(); ++d) out[f][d] = k1[d][idx[d]];
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

std::vector<std::vector<double>> torus_points(const std::vector<int>& shape, const std::vector<double>& periods) {
  int total = 1;
  for (int s : shape) total *= s;
  std::vector<std::vector<double>> out(total, std::vector<double>(shape.size()));
  std::vector<int> idx(shape.size(), 0);
  for (int f = 0; f < total; ++f) {
    for (std::size_t d = 0; d < shape.size(); ++d) out[f][d] = periods[d] * idx[d] / shape[d];
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

void fft_inplace(const std::vector<int>& shape, cplx* data, int sign) {
  fftw_plan p = get_plan(shape, sign > 0 ? FFTW_BACKWARD : FFTW_FORWARD);
  auto* d = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(p, d, d);
}

CVec fourier_coefficients(const CVec& samples) {
  CVec c = samples;
  fft_inplace({static_cast<int>(c.size())}, c.data(), -1);
  return c / static_cast<double>(c.size());
}

CVec from_fourier(const CVec& coeffs) {
  CVec u = coeffs;
  fft_inplace({static_cast<int>(u.size())}, u.data(), +1);
  return u;
}

RMat derivative_matrix(int n, double period) {
  RMat d = RMat::Zero(n, n);
  const double h = 2.0 * kPi / n, scale = 2.0 * kPi / period;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const int m = i - j;
      const double sgn = (m % 2 == 0) ? 1.0 : -1.0;
      d(i, j) = scale * 0.5 * sgn / std::tan(m * h / 2.0);
    }
  return d;
}

CVec differentiate(const CVec& samples, double period, int order) {
  const int n = static_cast<int>(samples.size());
  CVec c = fourier_coefficients(samples);
  const auto k = wavenumbers(n, period);
  for (int i = 0; i < n; ++i) {
    if (n % 2 == 0 && i == n / 2) {
      c(i) = 0.0;
      continue;
    }
    c(i) *= std::pow(kI * k[i], order);
  }
  return from_fourier(c);
}

PeriodicSamples apply_multiplier(const PeriodicSamples& f, const FourierMultiplier& m) {
  PeriodicSamples out = f;
  fft_inplace(out.shape, out.values.data(), -1);
  const auto xi = frequency_vectors(out.shape, out.periods);
  for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values(i) *= m.weight(xi[i]);
  fft_inplace(out.shape, out.values.data(), +1);
  out.values /= static_cast<double>(out.values.size());
  return out;
}

SpectralField apply_multiplier(const SpectralField& f, const FourierMultiplier& m) {
  f.check_shape();
  SpectralField out = f;
  const auto shape = tangential_shape(f.grid);
  const auto xi = frequency_vectors(shape, f.grid.periods);
  const int nt = f.grid.tangential_size();
  const int nl = f.location == Location::interior ? f.grid.layers() : 1;
  std::vector<cplx> w(nt);
  for (int i = 0; i < nt; ++i) w[i] = m.weight(xi[i]);
  for (int j = 0; j < nl; ++j) {
    cplx* d = out.values.data() + j * nt;
    fft_inplace(shape, d, -1);
    for (int i = 0; i < nt; ++i) d[i] *= w[i] / static_cast<double>(nt);
    fft_inplace(shape, d, +1);
  }
  return out;
}

double sobolev_norm(const PeriodicSamples& f, double s) {
  CVec c = f.values;
  fft_inplace(f.shape, c.data(), -1);
  const auto r = abs_frequencies(f.shape, f.periods);
  double acc = 0;
  for (Eigen::Index i = 0; i < c.size(); ++i) acc += std::pow(1.0 + r[i] * r[i], s) * std::norm(c(i));
  return std::sqrt(f.measure_factor * f.cell() * acc / static_cast<double>(c.size()));
}

double sobolev_norm(const SpectralField& f, double s) { return sobolev_norm(periodic_view(f), s); }

double lp_norm(const PeriodicSamples& f, double p) {
  if (p < 1) throw ArgumentError("lp_norm: p must be >= 1");
  if (std::isinf(p)) return f.values.size() ? f.values.cwiseAbs().maxCoeff() : 0.0;
  double acc = 0;
  for (Eigen::Index i = 0; i < f.values.size(); ++i) acc += std::pow(std::abs(f.values(i)), p);
  return std::pow(f.measure_factor * f.cell() * acc, 1.0 / p);
}

std::vector<double> besov_blocks(const SpectralField& f, double s, double p, const DyadicPartition& part) {
  if (p < 1) throw ArgumentError("besov_norm: p must be >= 1");
  PeriodicSamples base = periodic_view(f);
  CVec c = base.values;
  fft_inplace(base.shape, c.data(), -1);
  const auto r = abs_frequencies(base.shape, base.periods);
  std::vector<double> out;
  for (int j = 0; j < part.blocks(); ++j) {
    PeriodicSamples blk = base;
    for (Eigen::Index i = 0; i < c.size(); ++i) blk.values(i) = c(i) * part.phi(j, r[i]);
    fft_inplace(blk.shape, blk.values.data(), +1);
    blk.values /= static_cast<double>(c.size());
    out.push_back(std::pow(2.0, s * j) * lp_norm(blk, p));
  }
  return out;
}

double besov_norm(const SpectralField& f, double s, double p, double q, const DyadicPartition& part) {
  if (p < 1 || q < 1) throw ArgumentError("besov_norm: p and q must be >= 1");
  const auto b = besov_blocks(f, s, p, part);
  if (std::isinf(q)) return *std::max_element(b.begin(), b.end());
  double acc = 0;
  for (double x : b) acc += std::pow(x, q);
  return std::pow(acc, 1.0 / q);
}

SpectralField trace_gamma0(const SpectralField& u, Component c) {
  u.check_shape();
  if (u.location != Location::interior) throw ArgumentError("trace: field has no boundary nodes");
  SpectralField g = SpectralField::boundary(u.grid);
  const int nt = u.grid.tangential_size();
  const int j = c == Component::bottom ? 0 : u.grid.points_normal;
  g.values = u.values.segment(j * nt, nt);
  return g;
}

void set_trace(SpectralField& u, const SpectralField& g, Component c) {
  const int nt = u.grid.tangential_size();
  if (g.values.size() != nt) throw ArgumentError("set_trace: boundary size mismatch");
  const int j = c == Component::bottom ? 0 : u.grid.points_normal;
  u.values.segment(j * nt, nt) = g.values;
}

SpectralField lift_semigroup(const SpectralField& g) {
  g.check_shape();
  if (g.location != Location::boundary) throw ArgumentError("lift_semigroup: boundary field expected");
  const auto shape = tangential_shape(g.grid);
  const int nt = g.grid.tangential_size();
  CVec c = g.values;
  fft_inplace(shape, c.data(), -1);
  c /= static_cast<double>(nt);
  const auto r = abs_frequencies(shape, g.grid.periods);
  SpectralField out = SpectralField::interior(g.grid);
  for (int j = 0; j < g.grid.layers(); ++j) {
    const double xn = g.grid.x_normal(j);
    CVec layer(nt);
    for (int i = 0; i < nt; ++i) layer(i) = c(i) * std::exp(-std::sqrt(1.0 + r[i] * r[i]) * xn);
    fft_inplace(shape, layer.data(), +1);
    out.values.segment(j * nt, nt) = layer;
  }
  return out;
}

double weighted_boundary_norm(const SpectralField& u, double s, const SpectralField& kappa) {
  u.check_shape();
  if (kappa.values.size() != u.values.size()) throw ArgumentError("weighted_boundary_norm: kappa shape mismatch");
  for (Eigen::Index i = 0; i < kappa.values.size(); ++i)
    if (!(kappa.values(i).real() > 0)) throw ArgumentError("weighted_boundary_norm: kappa must be positive");
  if (s >= 0) return sobolev_norm(u, s);
  SpectralField w = u;
  w.values = u.values.cwiseProduct(kappa.values);
  return sobolev_norm(w, s);
}

double lift_mixed_norm(const SpectralField& g, int k, double p) {
  g.check_shape();
  const auto shape = tangential_shape(g.grid);
  const int nt = g.grid.tangential_size();
  CVec c = g.values;
  fft_inplace(shape, c.data(), -1);
  c /= static_cast<double>(nt);
  const auto r = abs_frequencies(shape, g.grid.periods);
  double total = 0;
  for (int m = 0; m <= k; ++m) {
    const double smooth = k - m;
    double acc = 0;
    for (int j = 0; j < g.grid.layers(); ++j) {
      const double xn = g.grid.x_normal(j);
      PeriodicSamples layer{shape, g.grid.periods, CVec(nt), 1.0};
      for (int i = 0; i < nt; ++i) {
        const double br = std::sqrt(1.0 + r[i] * r[i]);
        layer.values(i) = c(i) * std::pow(-br, m) * std::exp(-br * xn) * std::pow(br, smooth);
      }
      fft_inplace(shape, layer.values.data(), +1);
      const double n = lp_norm(layer, p);
      acc += trapezoid_weight(g.grid, j) * n * n;
    }
    total += acc;
  }
  return std::sqrt(total);
}

cplx inner_product(const SpectralField& u, const SpectralField& v) {
  u.check_shape();
  v.check_shape();
  if (u.values.size() != v.values.size()) throw ArgumentError("inner_product: shape mismatch");
  const double cell = u.grid.tangential_cell();
  if (u.location == Location::boundary) return cell * v.values.dot(u.values);
  const int nt = u.grid.tangential_size();
  cplx acc = 0;
  for (int j = 0; j < u.grid.layers(); ++j)
    acc += trapezoid_weight(u.grid, j) * v.values.segment(j * nt, nt).dot(u.values.segment(j * nt, nt));
  return cell * acc;
}

}  // namespace kreinlab::grid
