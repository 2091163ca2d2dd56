// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "kreinlab/domain_geometry.hpp"
#include "kreinlab/errors.hpp"

#include <cmath>
#include <random>

using namespace kreinlab;
using namespace kreinlab::geom;
using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

namespace {

StripGeometry sine_strip(int nt, int nn, double amp = 0.1) {
  GridSpec g = GridSpec::strip(nt, nn);
  auto b = BoundaryGraph::from_function(g, [amp](double x) { return amp * std::sin(x); });
  return StripGeometry::build(b, BoundaryGraph::flat(g));
}

StripGeometry two_sided(int nt, int nn) {
  GridSpec g = GridSpec::strip(nt, nn);
  auto b = BoundaryGraph::from_function(g, [](double x) { return 0.1 * std::sin(x) + 0.05 * std::cos(2 * x); });
  auto t = BoundaryGraph::from_function(g, [](double x) { return 0.08 * std::cos(x); });
  return StripGeometry::build(b, t);
}

double trap(const GridSpec& g, int j) {
  const double h = g.h_normal();
  return (j == 0 || j == g.points_normal) ? 0.5 * h : h;
}

// u = (a cos k y1 + b sin k y1) exp(c y2) with closed-form derivatives.
struct Smooth {
  double a, b, c;
  int k;
  cplx u(double y1, double y2) const { return (a * std::cos(k * y1) + b * std::sin(k * y1)) * std::exp(c * y2); }
  double s(double y1) const { return a * std::cos(k * y1) + b * std::sin(k * y1); }
  double sp(double y1) const { return k * (-a * std::sin(k * y1) + b * std::cos(k * y1)); }
  std::array<double, 2> grad(double y1, double y2) const {
    const double e = std::exp(c * y2);
    return {sp(y1) * e, c * s(y1) * e};
  }
  std::array<double, 3> hess(double y1, double y2) const {
    const double e = std::exp(c * y2);
    return {-double(k * k) * s(y1) * e, c * sp(y1) * e, c * c * s(y1) * e};
  }
};

double sum_sq(const SpectralField& f, const GridSpec& g, const RMat* jac = nullptr) {
  double acc = 0;
  const double hp = g.periods[0] / g.tangential_size();
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < g.tangential_size(); ++i)
      acc += std::norm(f.at(i, j)) * trap(g, j) * hp * (jac ? (*jac)(j, i) : 1.0);
  return acc;
}

}  // namespace

TEST_CASE("flat graph gives the identity map") {
  auto geo = StripGeometry::flat(GridSpec::strip(16, 8));
  const auto& d = geo.diffeo;
  CHECK(d.is_identity());
  CHECK(d.lambda_scale == 1.0);
  for (int j = 0; j < geo.grid().layers(); ++j)
    for (int i = 0; i < 16; ++i) {
      CHECK(d.nodes.f(j, i) == doctest::Approx(geo.grid().x_normal(j)).epsilon(1e-15));
      const auto p = phi_at(d.nodes, j, i);
      CHECK(std::abs(p.p12) < 1e-15);
      CHECK(std::abs(p.p22 - 1.0) < 1e-15);
    }
  CHECK((d.kappa_bottom.values.array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK(d.lift.values.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("surface measure of a sine graph") {
  auto geo = sine_strip(64, 16);
  const auto x = geo.grid().tangential_axis();
  double err = 0;
  for (int i = 0; i < 64; ++i)
    err = std::max(err, std::abs(geo.diffeo.kappa_bottom.values(i).real() -
                                 std::sqrt(1 + 0.01 * std::cos(x[i]) * std::cos(x[i]))));
  CHECK(err < 1e-12);
  CHECK(geo.diffeo.kappa_bottom.values.real().minCoeff() >= 1.0);
  CHECK((geo.diffeo.kappa_top.values.array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("kappa equals one exactly where the slope vanishes") {
  auto geo = sine_strip(64, 16);
  for (int i = 0; i < 64; ++i) {
    const double kap = geo.diffeo.kappa_bottom.values(i).real();
    CHECK(kap >= 1.0);
    if (std::abs(geo.diffeo.slope_bottom(i)) < 1e-14) {
      CHECK(kap == 1.0);
    } else {
      CHECK(kap > 1.0);
    }
  }
}

TEST_CASE("map is monotone in the normal variable with a dyadic scale") {
  for (double amp : {0.1, 0.25, 0.4}) {
    auto geo = sine_strip(32, 16, amp);
    const auto& d = geo.diffeo;
    CHECK(d.nodes.fn.minCoeff() >= 0.5);
    const double l2 = std::log2(d.lambda_scale);
    CHECK(l2 == doctest::Approx(std::round(l2)));
    for (int j = 1; j < geo.grid().layers(); ++j) CHECK((d.nodes.f.row(j) - d.nodes.f.row(j - 1)).minCoeff() > 0);
    // boundary rows reproduce the graphs
    CHECK((d.nodes.f.row(0).transpose() - geo.bottom.gamma).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((d.nodes.f.row(16).transpose().array() - 1.0 - geo.top.gamma.array()).abs().maxCoeff() < 1e-12);
  }
  // the linear blend cannot keep dF_n/dx_n >= 1/2 once the graphs differ by more than L/2
  CHECK_THROWS_AS(sine_strip(32, 16, 0.8), ArgumentError);
}

TEST_CASE("construction is deterministic") {
  auto a = two_sided(32, 16), b = two_sided(32, 16);
  CHECK(a.diffeo.lambda_scale == b.diffeo.lambda_scale);
  CHECK(a.diffeo.nodes.f == b.diffeo.nodes.f);
  CHECK(a.diffeo.nodes.fnn == b.diffeo.nodes.fnn);
  CHECK(a.diffeo.kappa_bottom.values == b.diffeo.kappa_bottom.values);
}

TEST_CASE("Phi inverts the transposed Jacobian at every node") {
  auto geo = two_sided(32, 16);
  const auto& s = geo.diffeo.nodes;
  double err = 0;
  for (int j = 0; j < geo.grid().layers(); ++j)
    for (int i = 0; i < 32; ++i) {
      const auto p = phi_at(s, j, i);
      Eigen::Matrix2d P, DFt;
      P << p.p11, p.p12, p.p21, p.p22;
      DFt << 1.0, s.ft(j, i), 0.0, s.fn(j, i);
      err = std::max(err, (P * DFt - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff());
    }
  CHECK(err < 1e-10);
}

TEST_CASE("map derivatives agree with differences of the map") {
  auto geo = two_sided(64, 32);
  const auto& d = geo.diffeo;
  const double eps = 1e-5;
  std::vector<double> xs{0.3, 0.3 - eps, 0.3 + eps};
  auto s = d.sample(xs);
  CHECK(((s.f.row(2) - s.f.row(1)) / (2 * eps) - s.fn.row(0)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(((s.fn.row(2) - s.fn.row(1)) / (2 * eps) - s.fnn.row(0)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(((s.ft.row(2) - s.ft.row(1)) / (2 * eps) - s.ftn.row(0)).cwiseAbs().maxCoeff() < 1e-7);
  RVec ft = grid::differentiate(s.f.row(0).transpose().cast<cplx>(), 2 * kPi).real();
  CHECK((ft - s.ft.row(0).transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("graph validation") {
  GridSpec g = GridSpec::strip(16, 8);
  CHECK_THROWS_AS(BoundaryGraph::from_function(g, [](double x) { return 0.1 * x; }), ArgumentError);
  CHECK_THROWS_AS(BoundaryGraph::from_function(g, [](double x) { return std::sin(x); }, 1, 8.0), ArgumentError);
  BoundaryGraph bad{g, RVec::Zero(8)};
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  auto low = BoundaryGraph::from_function(g, [](double) { return -1.5; });
  CHECK_THROWS_AS(StripGeometry::build(BoundaryGraph::flat(g), low), ArgumentError);
  GridSpec g3 = g;
  g3.dim = 3;
  g3.periods = {2 * kPi, 2 * kPi};
  g3.points_tangential = {8, 8};
  CHECK_THROWS_AS(BoundaryGraph::flat(g3), ArgumentError);
}

TEST_CASE("pullback on the identity map reproduces aligned samples") {
  auto geo = StripGeometry::flat(GridSpec::strip(16, 8));
  auto f = [](double x, double y) { return cplx(std::sin(x) * std::exp(y), y * y * y); };
  auto u = PhysicalField::sample(geo, 9, f, 0.0);
  auto pb = pullback(u, geo);
  auto ref = pullback_function(f, geo);
  CHECK((pb.values - ref.values).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("pullback of the normal coordinate is the map itself") {
  auto geo = sine_strip(32, 16);
  auto u = PhysicalField::sample(geo, 41, [](double, double y) { return cplx(y, 0); });
  auto pb = pullback(u, geo);
  const GridSpec& g = geo.grid();
  double err = 0;
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < 32; ++i) {
      const double x = g.x_normal(j);
      err = std::max(err, std::abs(pb.at(i, j) - (x + (1 - x) * geo.diffeo.lift.at(i, j))));
    }
  CHECK(err < 1e-12);
}

TEST_CASE("pullback interpolation converges at fourth order") {
  std::vector<double> errs;
  for (int ny : {41, 81}) {
    auto geo = two_sided(32, 16);
    auto f = [](double x, double y) { return cplx(std::cos(x) * std::sin(3 * y), 0); };
    auto pb = pullback(PhysicalField::sample(geo, ny, f), geo);
    errs.push_back((pb.values - pullback_function(f, geo).values).cwiseAbs().maxCoeff());
  }
  CHECK(errs[0] / errs[1] > 12.0);
  auto geo = two_sided(32, 16);
  PhysicalField small = PhysicalField::sample(geo, 10, [](double, double) { return cplx(1); });
  small.y_max = 0.5;
  CHECK_THROWS_AS(pullback(small, geo), ArgumentError);
}

TEST_CASE("pullback preserves Sobolev norms up to constants") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  std::uniform_int_distribution<int> K(1, 4);
  auto geo = two_sided(64, 32);
  const GridSpec& g = geo.grid();
  const auto& s = geo.diffeo.nodes;
  const RMat jac = s.fn;
  for (int trial = 0; trial < 8; ++trial) {
    Smooth w{U(rng), U(rng), U(rng), K(rng)};
    auto pulled = pullback_function([&](double a, double b) { return w.u(a, b); }, geo);
    // physical norms by change of variables with exact derivatives
    SpectralField gx = SpectralField::interior(g), gy = gx, hxx = gx, hxy = gx, hyy = gx;
    for (int j = 0; j < g.layers(); ++j)
      for (int i = 0; i < 64; ++i) {
        const auto p = geo.point(i, j);
        const auto gr = w.grad(p[0], p[1]);
        const auto he = w.hess(p[0], p[1]);
        gx.at(i, j) = gr[0];
        gy.at(i, j) = gr[1];
        hxx.at(i, j) = he[0];
        hxy.at(i, j) = he[1];
        hyy.at(i, j) = he[2];
      }
    const double p0 = sum_sq(pulled, g, &jac);
    const double p1 = p0 + sum_sq(gx, g, &jac) + sum_sq(gy, g, &jac);
    const double p2 = p1 + sum_sq(hxx, g, &jac) + 2 * sum_sq(hxy, g, &jac) + sum_sq(hyy, g, &jac);
    auto rg = reference_gradient(pulled);
    auto rt = reference_gradient(rg[0]);
    auto rn = reference_gradient(rg[1]);
    const double r0 = sum_sq(pulled, g);
    const double r1 = r0 + sum_sq(rg[0], g) + sum_sq(rg[1], g);
    const double r2 = r1 + sum_sq(rt[0], g) + sum_sq(rt[1], g) + sum_sq(rn[0], g) + sum_sq(rn[1], g);
    for (double ratio : {std::sqrt(r0 / p0), std::sqrt(r1 / p1), std::sqrt(r2 / p2)}) {
      CHECK(ratio > 0.25);
      CHECK(ratio < 4.0);
    }
  }
}

TEST_CASE("transformed gradient") {
  SUBCASE("linear function on the identity map") {
    auto geo = StripGeometry::flat(GridSpec::strip(16, 8));
    auto pulled = pullback_function([](double, double y) { return cplx(2 * y - 1, 0); }, geo);
    auto gr = transform_gradient(pulled, geo);
    CHECK(gr[0].values.cwiseAbs().maxCoeff() < 1e-12);
    CHECK((gr[1].values.array() - 2.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("identity map gives the plain reference gradient") {
    auto geo = StripGeometry::flat(GridSpec::strip(16, 8));
    auto pulled = pullback_function([](double x, double y) { return cplx(std::sin(x) * y * y, 0); }, geo);
    auto a = transform_gradient(pulled, geo);
    auto b = reference_gradient(pulled);
    CHECK((a[0].values - b[0].values).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((a[1].values - b[1].values).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("curved map converges at second order") {
    std::vector<double> errs;
    for (int nn : {16, 32, 64}) {
      auto geo = two_sided(32, nn);
      auto f = [](double x, double y) { return cplx(std::sin(x) * y, 0); };
      auto gr = transform_gradient(PhysicalField::sample(geo, 8 * nn + 1, f), geo);
      double err = 0;
      for (int j = 0; j < geo.grid().layers(); ++j)
        for (int i = 0; i < 32; ++i) {
          const auto p = geo.point(i, j);
          err = std::max(err, std::abs(gr[0].at(i, j) - std::cos(p[0]) * p[1]));
          err = std::max(err, std::abs(gr[1].at(i, j) - std::sin(p[0])));
        }
      errs.push_back(err);
    }
    CHECK(errs[0] / errs[1] > 3.0);
    CHECK(errs[1] / errs[2] > 3.0);
  }
}

TEST_CASE("transformed Hessian") {
  SUBCASE("flat map has no remainder") {
    auto geo = StripGeometry::flat(GridSpec::strip(16, 8));
    auto pulled = pullback_function([](double x, double y) { return cplx(std::sin(x) * y * y, 0); }, geo);
    auto h = transform_hessian(pulled, geo);
    for (auto& row : h.remainder)
      for (auto& f : row) CHECK(f.values.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("quadratic in y on a curved strip") {
    std::vector<double> errs;
    for (int nn : {16, 32, 64}) {
      auto geo = two_sided(32, nn);
      auto pulled = pullback_function([](double x, double y) { return cplx((1 + std::sin(x)) * y * y, 0); }, geo);
      auto h = transform_hessian(pulled, geo);
      double err = 0;
      for (int j = 0; j < geo.grid().layers(); ++j)
        for (int i = 0; i < 32; ++i) {
          const auto p = geo.point(i, j);
          const double ex[2][2] = {{-std::sin(p[0]) * p[1] * p[1], 2 * std::cos(p[0]) * p[1]},
                                   {2 * std::cos(p[0]) * p[1], 2 * (1 + std::sin(p[0]))}};
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              err = std::max(err, std::abs(h.principal[a][b].at(i, j) + h.remainder[a][b].at(i, j) - ex[a][b]));
        }
      errs.push_back(err);
    }
    CHECK(errs[0] / errs[1] > 1.8);
    CHECK(errs[1] / errs[2] > 1.8);
    CHECK(errs[2] < 0.05);
  }
  SUBCASE("remainder is bounded by a lower-order norm") {
    std::vector<double> ratios;
    for (int n : {16, 32, 64}) {
      auto geo = two_sided(n, n);
      const double tau = geo.bottom.tau();
      auto pulled =
          pullback_function([](double x, double y) { return cplx(std::cos(2 * x) * std::exp(-y), 0); }, geo);
      auto h = transform_hessian(pulled, geo);
      double r2 = 0;
      for (auto& row : h.remainder)
        for (auto& f : row) r2 += sum_sq(f, geo.grid());
      ratios.push_back(std::sqrt(r2) / grid::sobolev_norm(pulled, 2 - tau));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(*hi / *lo < 1.5);
  }
}

TEST_CASE("weighted boundary pullbacks") {
  auto geo = two_sided(32, 16);
  const GridSpec& g = geo.grid();
  const double hp = 2 * kPi / 32;
  std::mt19937_64 rng(3);
  for (Component c : {Component::bottom, Component::top}) {
    const CVec& kap = geo.kappa(c).values;
    for (int t = 0; t < 5; ++t) {
      SpectralField v = SpectralField::boundary(g), phi = SpectralField::boundary(g);
      v.values = la::random_complex(32, 1, rng);
      phi.values = la::random_complex(32, 1, rng);
      auto inv = tilde_pullback(v, geo, c, PullbackDirection::inverse);
      // pairing on the boundary curve uses d sigma = kappa dx'
      cplx lhs = 0, rhs = 0;
      for (int i = 0; i < 32; ++i) {
        lhs += inv.values(i) * std::conj(phi.values(i)) * kap(i) * hp;
        rhs += v.values(i) * std::conj(phi.values(i)) * hp;
      }
      CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(rhs) + 1e-14);
      auto back = tilde_pullback(inv, geo, c, PullbackDirection::forward);
      CHECK((back.values - v.values).cwiseAbs().maxCoeff() < 1e-14);
      SpectralField kv = v;
      kv.values = v.values.cwiseProduct(kap);
      auto twice = tilde_pullback(kv, geo, c, PullbackDirection::forward);
      CHECK((twice.values - v.values.cwiseProduct(kap).cwiseProduct(kap)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
  auto flat = StripGeometry::flat(g);
  SpectralField v = SpectralField::boundary(g);
  v.values = la::random_complex(32, 1, rng);
  CHECK(tilde_pullback(v, flat, Component::bottom, PullbackDirection::forward).values == v.values);
}

TEST_CASE("Gauss identity with the interior normal") {
  // f = (sin y1 * y2^2, cos y1 * exp(y2)); div f = cos y1 y2^2 + cos y1 exp(y2)
  std::vector<double> errs;
  for (int nn : {16, 32, 64}) {
    auto geo = two_sided(64, nn);
    const GridSpec& g = geo.grid();
    const double hp = 2 * kPi / 64;
    double vol = 0;
    for (int j = 0; j < g.layers(); ++j)
      for (int i = 0; i < 64; ++i) {
        const auto p = geo.point(i, j);
        const double div = std::cos(p[0]) * p[1] * p[1] + std::cos(p[0]) * std::exp(p[1]);
        vol += div * geo.diffeo.nodes.fn(j, i) * trap(g, j) * hp;
      }
    double bdry = 0;
    for (Component c : {Component::bottom, Component::top}) {
      const auto nu = geo.normal(c);
      const int j = c == Component::bottom ? 0 : g.points_normal;
      for (int i = 0; i < 64; ++i) {
        const auto p = geo.point(i, j);
        const double f1 = std::sin(p[0]) * p[1] * p[1], f2 = std::cos(p[0]) * std::exp(p[1]);
        bdry += (nu[0](i) * f1 + nu[1](i) * f2) * geo.kappa(c).values(i).real() * hp;
      }
    }
    errs.push_back(std::abs(vol + bdry));
  }
  CHECK(errs[0] / errs[1] > 3.5);
  CHECK(errs[1] / errs[2] > 3.5);
  CHECK(errs[2] < 1e-3);
}

TEST_CASE("Hoelder data of the map gradient") {
  SUBCASE("smooth graph is Lipschitz") {
    auto geo = two_sided(64, 16);
    CHECK(measured_holder_exponent(geo) > 0.9);
  }
  SUBCASE("rough graph keeps a bounded seminorm") {
    std::vector<double> semis;
    double tau = 0;
    for (int nt : {64, 128, 256, 512}) {
      GridSpec g = GridSpec::strip(nt, 16);
      auto b = BoundaryGraph::from_function(g, [](double x) { return 0.05 * std::pow(std::abs(std::sin(x)), 1.6); });
      auto geo = StripGeometry::build(b, BoundaryGraph::flat(g));
      tau = b.tau();
      semis.push_back(holder_seminorm(geo, std::min(tau, 0.49)));
      const double e = measured_holder_exponent(geo);
      CHECK(e > 0.4);
      CHECK(e < 0.9);
    }
    CHECK(tau == doctest::Approx(0.375));
    CHECK(semis.back() / semis.front() < 1.5);
  }
}

TEST_CASE("geometry json round trip") {
  auto geo = two_sided(32, 16);
  auto text = geometry_to_json(geo);
  auto back = geometry_from_json(text, geo.grid());
  CHECK(back.bottom.gamma == geo.bottom.gamma);
  CHECK(back.top.gamma == geo.top.gamma);
  CHECK(back.diffeo.nodes.f == geo.diffeo.nodes.f);
  CHECK_THROWS_AS(geometry_from_json("{\"gamma_bottom\": [1, 2]}", geo.grid()), ArgumentError);
  CHECK_THROWS_AS(geometry_from_json("not json", geo.grid()), ArgumentError);
}
