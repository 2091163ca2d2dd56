// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/domain_geometry.hpp"

#include "kreinlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace kreinlab::geom {

using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

namespace {

void require_plane(const GridSpec& g) {
  g.validate();
  if (g.dim != 2) throw ArgumentError("geometry: only two-dimensional strips are supported");
}

// Real parts of the inverse transform of six per-mode quantities of a graph
// lift Gamma(x', s): G, G_t, G_tt, G_s, G_ss, G_ts.
struct LiftLayer {
  RVec g, gt, gtt, gs, gss, gts;
};

LiftLayer lift_layer(const CVec& hat, const std::vector<double>& k, double s) {
  const int n = static_cast<int>(hat.size());
  CVec c[6];
  for (auto& v : c) v.resize(n);
  for (int m = 0; m < n; ++m) {
    const double br = std::sqrt(1.0 + k[m] * k[m]);
    const cplx e = hat(m) * std::exp(-br * s);
    // odd derivatives lose the unpaired Nyquist mode
    const double ik_mask = (2 * m == n) ? 0.0 : 1.0;
    const cplx ik = kI * k[m] * ik_mask;
    c[0](m) = e;
    c[1](m) = ik * e;
    c[2](m) = -k[m] * k[m] * e;
    c[3](m) = -br * e;
    c[4](m) = br * br * e;
    c[5](m) = -br * ik * e;
  }
  LiftLayer out;
  RVec* dst[6] = {&out.g, &out.gt, &out.gtt, &out.gs, &out.gss, &out.gts};
  for (int q = 0; q < 6; ++q) *dst[q] = grid::from_fourier(c[q]).real();
  return out;
}

MapSamples sample_map(const GridSpec& g, const CVec& bh, const CVec& th, double lam,
                      const std::vector<double>& xn) {
  const int nt = g.tangential_size();
  const double L = g.normal_extent;
  const auto k = grid::wavenumbers(nt, g.periods[0]);
  const int r = static_cast<int>(xn.size());
  MapSamples s;
  s.xn = xn;
  for (RMat* m : {&s.f, &s.ft, &s.fn, &s.ftt, &s.ftn, &s.fnn}) m->resize(r, nt);
  for (int j = 0; j < r; ++j) {
    const double x = xn[j];
    const double a = 1.0 - x / L, b = x / L;
    const LiftLayer B = lift_layer(bh, k, lam * x);
    const LiftLayer T = lift_layer(th, k, lam * (L - x));
    s.f.row(j) = (x + (a * B.g + b * T.g).array()).matrix().transpose();
    s.ft.row(j) = (a * B.gt + b * T.gt).transpose();
    s.ftt.row(j) = (a * B.gtt + b * T.gtt).transpose();
    s.fn.row(j) = (1.0 + (-B.g / L + a * lam * B.gs + T.g / L - b * lam * T.gs).array()).matrix().transpose();
    s.ftn.row(j) = (-B.gt / L + a * lam * B.gts + T.gt / L - b * lam * T.gts).transpose();
    s.fnn.row(j) =
        (-2.0 * lam * B.gs / L + a * lam * lam * B.gss - 2.0 * lam * T.gs / L + b * lam * lam * T.gss).transpose();
  }
  return s;
}

double max_abs_gs(const CVec& hat, const std::vector<double>& k, const std::vector<double>& svals) {
  double m = 0;
  for (double s : svals) m = std::max(m, lift_layer(hat, k, s).gs.cwiseAbs().maxCoeff());
  return m;
}

SpectralField interior_from(const GridSpec& g, const RMat& m) {
  SpectralField f = SpectralField::interior(g);
  const int nt = g.tangential_size();
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < nt; ++i) f.at(i, j) = m(j, i);
  return f;
}

SpectralField boundary_from(const GridSpec& g, const RVec& v) {
  SpectralField f = SpectralField::boundary(g);
  f.values = v.cast<cplx>();
  return f;
}

}  // namespace

// --- BoundaryGraph ------------------------------------------------------------

void BoundaryGraph::validate() const {
  require_plane(grid);
  if (gamma.size() != grid.tangential_size()) throw ArgumentError("BoundaryGraph: sample count mismatch");
  if (!gamma.allFinite()) throw ArgumentError("BoundaryGraph: non-finite samples");
  if (!(p >= 1.0)) throw ArgumentError("BoundaryGraph: p must be >= 1");
  if (!(tau() > 0.0)) throw ArgumentError("BoundaryGraph: smoothness index tau must be positive");
}

BoundaryGraph BoundaryGraph::flat(const GridSpec& g) {
  require_plane(g);
  return BoundaryGraph{g, RVec::Zero(g.tangential_size())};
}

BoundaryGraph BoundaryGraph::from_function(const GridSpec& g, const std::function<double(double)>& f, int M,
                                           double p) {
  require_plane(g);
  const double P = g.periods[0];
  const double f0 = f(0.0), fP = f(P);
  if (std::abs(f0 - fP) > 1e-8 * std::max(1.0, std::abs(f0)))
    throw ArgumentError("BoundaryGraph: gamma is not periodic");
  auto ax = g.tangential_axis(0);
  RVec v(ax.size());
  for (std::size_t i = 0; i < ax.size(); ++i) v(i) = f(ax[i]);
  BoundaryGraph b{g, v, M, p};
  b.validate();
  return b;
}

// --- DiffeoData ---------------------------------------------------------------

MapSamples DiffeoData::sample(const std::vector<double>& xn) const {
  return sample_map(grid, bottom_hat, top_hat, lambda_scale, xn);
}

bool DiffeoData::is_identity() const {
  return bottom_hat.cwiseAbs().maxCoeff() == 0.0 && top_hat.cwiseAbs().maxCoeff() == 0.0;
}

DiffeoData build_diffeo(const BoundaryGraph& bottom) {
  return build_diffeo(bottom, BoundaryGraph::flat(bottom.grid));
}

DiffeoData build_diffeo(const BoundaryGraph& bottom, const BoundaryGraph& top) {
  bottom.validate();
  top.validate();
  if (!(bottom.grid == top.grid)) throw ArgumentError("build_diffeo: graphs live on different grids");
  const GridSpec& g = bottom.grid;
  const double L = g.normal_extent;
  const double gap = (L + top.gamma.array() - bottom.gamma.array()).minCoeff();
  if (!(gap > 0.0)) throw ArgumentError("build_diffeo: top graph does not lie above the bottom graph");

  DiffeoData d;
  d.grid = g;
  d.bottom_hat = grid::fourier_coefficients(bottom.gamma.cast<cplx>());
  d.top_hat = grid::fourier_coefficients(top.gamma.cast<cplx>());

  const auto k = grid::wavenumbers(g.tangential_size(), g.periods[0]);
  // nodes and cell midpoints
  std::vector<double> probe;
  for (int j = 0; j <= 2 * g.points_normal; ++j) probe.push_back(0.5 * j * g.h_normal());
  std::vector<double> nodes;
  for (int j = 0; j < g.layers(); ++j) nodes.push_back(g.x_normal(j));

  bool found = false;
  for (int m = 0; m <= 40 && !found; ++m) {
    const double lam = std::ldexp(1.0, -m);
    std::vector<double> sb, st;
    for (double x : probe) {
      sb.push_back(lam * x);
      st.push_back(lam * (L - x));
    }
    if (lam * max_abs_gs(d.bottom_hat, k, sb) > 0.5 || lam * max_abs_gs(d.top_hat, k, st) > 0.5) continue;
    MapSamples s = sample_map(g, d.bottom_hat, d.top_hat, lam, probe);
    if (s.fn.minCoeff() < 0.5) continue;
    d.lambda_scale = lam;
    found = true;
  }
  if (!found) throw ArgumentError("build_diffeo: no scale keeps the map monotone in x_n");

  d.nodes = d.sample(nodes);
  // the lift of the bottom graph alone, for reference
  RMat lift(g.layers(), g.tangential_size());
  for (int j = 0; j < g.layers(); ++j) lift.row(j) = lift_layer(d.bottom_hat, k, d.lambda_scale * nodes[j]).g.transpose();
  d.lift = interior_from(g, lift);

  d.slope_bottom = grid::differentiate(bottom.gamma.cast<cplx>(), g.periods[0]).real();
  d.slope_top = grid::differentiate(top.gamma.cast<cplx>(), g.periods[0]).real();
  d.kappa_bottom = boundary_from(g, (1.0 + d.slope_bottom.array().square()).sqrt().matrix());
  d.kappa_top = boundary_from(g, (1.0 + d.slope_top.array().square()).sqrt().matrix());
  return d;
}

PhiEntries phi_at(const MapSamples& s, int row, int i) {
  const double J = s.fn(row, i);
  return {1.0, -s.ft(row, i) / J, 0.0, 1.0 / J};
}

// --- StripGeometry ------------------------------------------------------------

StripGeometry StripGeometry::build(const BoundaryGraph& bottom, const BoundaryGraph& top) {
  return StripGeometry{bottom, top, build_diffeo(bottom, top)};
}

StripGeometry StripGeometry::flat(const GridSpec& g) {
  auto b = BoundaryGraph::flat(g);
  return build(b, b);
}

std::array<RVec, 2> StripGeometry::normal(Component c) const {
  const RVec& sl = c == Component::bottom ? diffeo.slope_bottom : diffeo.slope_top;
  const RVec kap = (1.0 + sl.array().square()).sqrt();
  if (c == Component::bottom) return {(-sl.array() / kap.array()).matrix(), (1.0 / kap.array()).matrix()};
  return {(sl.array() / kap.array()).matrix(), (-1.0 / kap.array()).matrix()};
}

std::array<double, 2> StripGeometry::point(int i, int j) const {
  return {grid().tangential_axis(0)[i], diffeo.nodes.f(j, i)};
}

// --- pullbacks ----------------------------------------------------------------

PhysicalField PhysicalField::sample(const StripGeometry& g, int ny, const std::function<cplx(double, double)>& f,
                                    double margin) {
  if (ny < 4) throw ArgumentError("PhysicalField: need at least 4 samples in y");
  PhysicalField u;
  u.grid = g.grid();
  u.ny = ny;
  u.y_min = g.bottom.gamma.minCoeff() - margin;
  u.y_max = g.grid().normal_extent + g.top.gamma.maxCoeff() + margin;
  const int nt = u.grid.tangential_size();
  const auto ax = u.grid.tangential_axis(0);
  u.values.resize(static_cast<Eigen::Index>(ny) * nt);
  for (int m = 0; m < ny; ++m)
    for (int i = 0; i < nt; ++i) u.values(m * nt + i) = f(ax[i], u.y(m));
  return u;
}

SpectralField pullback(const PhysicalField& u, const StripGeometry& g) {
  if (!(u.grid == g.grid())) throw ArgumentError("pullback: grid mismatch");
  const int nt = u.grid.tangential_size();
  if (u.ny < 4 || u.values.size() != static_cast<Eigen::Index>(u.ny) * nt)
    throw ArgumentError("pullback: malformed physical field");
  const double dy = (u.y_max - u.y_min) / (u.ny - 1);
  SpectralField out = SpectralField::interior(g.grid());
  const double slack = 1e-12 * std::max(1.0, u.y_max - u.y_min);
  for (int j = 0; j < out.grid.layers(); ++j) {
    for (int i = 0; i < nt; ++i) {
      const double y = g.diffeo.nodes.f(j, i);
      if (y < u.y_min - slack || y > u.y_max + slack)
        throw ArgumentError("pullback: evaluation point outside the sampled physical domain");
      const double s = (y - u.y_min) / dy;
      const int base = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, u.ny - 4);
      cplx acc = 0;
      for (int a = 0; a < 4; ++a) {
        double w = 1;
        for (int b = 0; b < 4; ++b)
          if (b != a) w *= (s - (base + b)) / double(a - b);
        acc += w * u.values((base + a) * nt + i);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

SpectralField pullback_function(const std::function<cplx(double, double)>& f, const StripGeometry& g) {
  SpectralField out = SpectralField::interior(g.grid());
  const auto ax = g.grid().tangential_axis(0);
  for (int j = 0; j < out.grid.layers(); ++j)
    for (int i = 0; i < out.grid.tangential_size(); ++i) out.at(i, j) = f(ax[i], g.diffeo.nodes.f(j, i));
  return out;
}

std::array<SpectralField, 2> reference_gradient(const SpectralField& u) {
  u.check_shape();
  if (u.location != grid::Location::interior) throw ArgumentError("reference_gradient: interior field expected");
  const GridSpec& g = u.grid;
  const int nt = g.tangential_size(), nl = g.layers();
  const double h = g.h_normal();
  SpectralField dt = SpectralField::interior(g), dn = SpectralField::interior(g);
  for (int j = 0; j < nl; ++j)
    dt.values.segment(j * nt, nt) = grid::differentiate(u.values.segment(j * nt, nt), g.periods[0]);
  for (int i = 0; i < nt; ++i) {
    dn.at(i, 0) = (-3.0 * u.at(i, 0) + 4.0 * u.at(i, 1) - u.at(i, 2)) / (2 * h);
    dn.at(i, nl - 1) = (3.0 * u.at(i, nl - 1) - 4.0 * u.at(i, nl - 2) + u.at(i, nl - 3)) / (2 * h);
    for (int j = 1; j < nl - 1; ++j) dn.at(i, j) = (u.at(i, j + 1) - u.at(i, j - 1)) / (2 * h);
  }
  return {dt, dn};
}

namespace {

SpectralField second_normal(const SpectralField& u) {
  const GridSpec& g = u.grid;
  const int nt = g.tangential_size(), nl = g.layers();
  const double h2 = g.h_normal() * g.h_normal();
  SpectralField d = SpectralField::interior(g);
  for (int i = 0; i < nt; ++i) {
    d.at(i, 0) = (2.0 * u.at(i, 0) - 5.0 * u.at(i, 1) + 4.0 * u.at(i, 2) - u.at(i, 3)) / h2;
    d.at(i, nl - 1) =
        (2.0 * u.at(i, nl - 1) - 5.0 * u.at(i, nl - 2) + 4.0 * u.at(i, nl - 3) - u.at(i, nl - 4)) / h2;
    for (int j = 1; j < nl - 1; ++j) d.at(i, j) = (u.at(i, j + 1) - 2.0 * u.at(i, j) + u.at(i, j - 1)) / h2;
  }
  return d;
}

}  // namespace

std::array<SpectralField, 2> transform_gradient(const SpectralField& pulled, const StripGeometry& g) {
  if (!(pulled.grid == g.grid())) throw ArgumentError("transform_gradient: grid mismatch");
  auto rg = reference_gradient(pulled);
  SpectralField g1 = SpectralField::interior(pulled.grid), g2 = SpectralField::interior(pulled.grid);
  for (int j = 0; j < pulled.grid.layers(); ++j)
    for (int i = 0; i < pulled.grid.tangential_size(); ++i) {
      const PhiEntries p = phi_at(g.diffeo.nodes, j, i);
      g1.at(i, j) = p.p11 * rg[0].at(i, j) + p.p12 * rg[1].at(i, j);
      g2.at(i, j) = p.p21 * rg[0].at(i, j) + p.p22 * rg[1].at(i, j);
    }
  return {g1, g2};
}

std::array<SpectralField, 2> transform_gradient(const PhysicalField& u, const StripGeometry& g) {
  return transform_gradient(pullback(u, g), g);
}

HessianParts transform_hessian(const SpectralField& pulled, const StripGeometry& g) {
  if (!(pulled.grid == g.grid())) throw ArgumentError("transform_hessian: grid mismatch");
  const GridSpec& gr = pulled.grid;
  auto d1 = reference_gradient(pulled);
  auto dtt = reference_gradient(d1[0])[0];
  auto dtn = reference_gradient(d1[0])[1];
  auto dnn = second_normal(pulled);
  HessianParts h;
  for (auto& row : h.principal)
    for (auto& f : row) f = SpectralField::interior(gr);
  for (auto& row : h.remainder)
    for (auto& f : row) f = SpectralField::interior(gr);
  const MapSamples& s = g.diffeo.nodes;
  for (int j = 0; j < gr.layers(); ++j)
    for (int i = 0; i < gr.tangential_size(); ++i) {
      const PhiEntries p = phi_at(s, j, i);
      const double P[2][2] = {{p.p11, p.p12}, {p.p21, p.p22}};
      const double J = s.fn(j, i), ft = s.ft(j, i);
      const double J2 = J * J;
      // dP[l][k][m] = d_l Phi_km; only Phi_12 and Phi_22 vary
      double dP[2][2][2] = {};
      dP[0][0][1] = -(s.ftt(j, i) * J - ft * s.ftn(j, i)) / J2;
      dP[1][0][1] = -(s.ftn(j, i) * J - ft * s.fnn(j, i)) / J2;
      dP[0][1][1] = -s.ftn(j, i) / J2;
      dP[1][1][1] = -s.fnn(j, i) / J2;
      const cplx D2[2][2] = {{dtt.at(i, j), dtn.at(i, j)}, {dtn.at(i, j), dnn.at(i, j)}};
      const cplx D1[2] = {d1[0].at(i, j), d1[1].at(i, j)};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          cplx pr = 0, rm = 0;
          for (int l = 0; l < 2; ++l)
            for (int m = 0; m < 2; ++m) {
              pr += P[a][l] * P[b][m] * D2[l][m];
              rm += P[a][l] * dP[l][b][m] * D1[m];
            }
          h.principal[a][b].at(i, j) = pr;
          h.remainder[a][b].at(i, j) = rm;
        }
    }
  return h;
}

HessianParts transform_hessian(const PhysicalField& u, const StripGeometry& g) {
  return transform_hessian(pullback(u, g), g);
}

SpectralField tilde_pullback(const SpectralField& u, const StripGeometry& g, Component c, PullbackDirection dir) {
  u.check_shape();
  if (u.location != grid::Location::boundary || !(u.grid == g.grid()))
    throw ArgumentError("tilde_pullback: boundary field on the geometry grid expected");
  // F fixes x', so the plain boundary pullback is the identity on samples.
  SpectralField out = u;
  const CVec& k = g.kappa(c).values;
  if (dir == PullbackDirection::forward)
    out.values = u.values.cwiseProduct(k);
  else
    out.values = u.values.cwiseQuotient(k);
  return out;
}

// --- Hoelder metadata ---------------------------------------------------------

namespace {

std::vector<std::pair<double, double>> oscillations(const StripGeometry& g) {
  const GridSpec& gr = g.grid();
  const int nt = gr.tangential_size();
  const double h = gr.periods[0] / nt;
  const MapSamples& s = g.diffeo.nodes;
  std::vector<std::pair<double, double>> out;
  for (int m = 1; m <= nt / 4; m *= 2) {
    double w = 0;
    for (int j : {0, gr.layers() - 1})
      for (int i = 0; i < nt; ++i) {
        const int q = (i + m) % nt;
        const double dft = s.ft(j, q) - s.ft(j, i), dfn = s.fn(j, q) - s.fn(j, i);
        w = std::max(w, std::hypot(dft, dfn));
      }
    out.emplace_back(m * h, w);
  }
  return out;
}

}  // namespace

double holder_seminorm(const StripGeometry& g, double t) {
  double best = 0;
  for (auto [d, w] : oscillations(g)) best = std::max(best, w / std::pow(d, t));
  return best;
}

double measured_holder_exponent(const StripGeometry& g) {
  std::vector<double> x, y;
  for (auto [d, w] : oscillations(g)) {
    if (w <= 1e-14) continue;
    x.push_back(std::log(d));
    y.push_back(std::log(w));
    if (x.size() == 4) break;
  }
  if (x.size() < 2) return 1.0;
  const auto fit = la::fit_line(x, y);
  return std::clamp(fit.slope, 0.0, 1.0);
}

// --- JSON ---------------------------------------------------------------------

std::string geometry_to_json(const StripGeometry& g) {
  nlohmann::json j;
  j["periods"] = g.grid().periods;
  j["height"] = g.grid().normal_extent;
  j["gamma_bottom"] = std::vector<double>(g.bottom.gamma.data(), g.bottom.gamma.data() + g.bottom.gamma.size());
  j["gamma_top"] = std::vector<double>(g.top.gamma.data(), g.top.gamma.data() + g.top.gamma.size());
  j["M"] = g.bottom.M;
  j["p"] = g.bottom.p;
  return j.dump(2);
}

StripGeometry geometry_from_json(const std::string& text, const GridSpec& g) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("geometry json: ") + e.what());
  }
  GridSpec gr = g;
  try {
    if (j.contains("periods")) gr.periods = j.at("periods").get<std::vector<double>>();
    if (j.contains("height")) gr.normal_extent = j.at("height").get<double>();
    auto read = [&](const char* key) {
      RVec v = RVec::Zero(gr.tangential_size());
      if (!j.contains(key)) return v;
      auto s = j.at(key).get<std::vector<double>>();
      if (static_cast<int>(s.size()) != gr.tangential_size())
        throw ArgumentError(std::string("geometry json: ") + key + " has the wrong length");
      return RVec(RVec::Map(s.data(), s.size()));
    };
    const int M = j.value("M", 2);
    const double p = j.value("p", 8.0);
    require_plane(gr);
    BoundaryGraph b{gr, read("gamma_bottom"), M, p}, t{gr, read("gamma_top"), M, p};
    return StripGeometry::build(b, t);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("geometry json: ") + e.what());
  }
}

}  // namespace kreinlab::geom
