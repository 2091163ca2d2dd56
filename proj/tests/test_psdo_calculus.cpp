// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "kreinlab/errors.hpp"
#include "kreinlab/psdo_calculus.hpp"

#include <cmath>
#include <random>

using namespace kreinlab;
using namespace kreinlab::psdo;
using grid::GridSpec;
using grid::PeriodicSamples;
using grid::SpectralField;

namespace {

double br(const std::vector<double>& xi) {
  double r = 0;
  for (double v : xi) r += v * v;
  return std::sqrt(1 + r);
}

SpectralField boundary_fn(const GridSpec& g, const std::function<cplx(double)>& f) {
  auto v = SpectralField::boundary(g);
  const auto x = g.tangential_axis();
  for (int i = 0; i < g.tangential_size(); ++i) v.values(i) = f(x[i]);
  return v;
}

SpectralField interior_fn(const GridSpec& g, const std::function<cplx(double, double)>& f) {
  auto v = SpectralField::interior(g);
  const auto x = g.tangential_axis();
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < g.tangential_size(); ++i) v.at(i, j) = f(x[i], g.x_normal(j));
  return v;
}

double rough(double x, double tau) { return 1.0 + 0.5 * std::pow(std::abs(std::sin(x)), tau); }

// Lacunary Weierstrass sum, C^tau uniformly, truncated below the Nyquist mode of an n-point grid.
double weierstrass(double x, double tau, int n) {
  double s = 0;
  for (int k = 0; (1 << k) < n / 2; ++k) s += std::pow(2.0, -k * tau) * std::cos(std::ldexp(1.0, k) * x);
  return 1.0 + 0.25 * s;
}

}  // namespace

TEST_CASE("x-form quantization") {
  GridSpec g = GridSpec::strip(32, 8);
  std::mt19937_64 rng(11);
  SpectralField u = SpectralField::boundary(g);
  u.values = la::random_complex(32, 1, rng);

  SUBCASE("unit symbol") {
    auto one = SymbolField::boundary(g, [](auto&, auto&) { return cplx(1); }, 0);
    CHECK((op_apply(one, u).values - u.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("x-independent symbols are Fourier multipliers") {
    auto p = SymbolField::boundary(g, [](auto&, auto& xi) { return cplx(std::pow(br(xi), 1.5)); }, 1.5);
    CHECK(p.x_independent());
    auto ref = grid::apply_multiplier(u, grid::FourierMultiplier::bracket(1.5));
    CHECK((op_apply(p, u).values - ref.values).cwiseAbs().maxCoeff() < 1e-12);
    auto q = SymbolField::interior(g, [](auto&, auto& xi) { return cplx(1.0 / br(xi)); }, -1);
    auto w = SpectralField::interior(g);
    w.values = la::random_complex(g.interior_size(), 1, rng);
    auto pv = grid::periodic_view(w);
    auto refi = grid::apply_multiplier(pv, grid::FourierMultiplier::bracket(-1));
    CHECK((op_apply(q, pv).values - refi.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("rough coefficient times a derivative") {
    auto p = SymbolField::boundary(
        g, [](auto& x, auto& xi) { return (2.0 + std::cos(x[0])) * kI * xi[0]; }, 1);
    auto v = boundary_fn(g, [](double x) { return std::exp(kI * 3.0 * x) + std::sin(2 * x); });
    auto out = op_apply(p, v);
    auto ex = boundary_fn(g, [](double x) { return (2.0 + std::cos(x)) * (3.0 * kI * std::exp(kI * 3.0 * x) + 2.0 * std::cos(2 * x)); });
    CHECK((out.values - ex.values).cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("linearity") {
    auto p = SymbolField::boundary(g, [](auto& x, auto& xi) { return rough(x[0], 0.5) * br(xi); }, 1);
    SpectralField v = SpectralField::boundary(g);
    v.values = la::random_complex(32, 1, rng);
    const cplx a(0.3, -1.2), b(2.0, 0.5);
    SpectralField comb = u;
    comb.values = a * u.values + b * v.values;
    auto lhs = op_apply(p, comb).values;
    auto rhs = (a * op_apply(p, u).values + b * op_apply(p, v).values).eval();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * rhs.cwiseAbs().maxCoeff());
  }
  SUBCASE("mismatched grids") {
    auto p = SymbolField::boundary(GridSpec::strip(16, 8), [](auto&, auto&) { return cplx(1); }, 0);
    CHECK_THROWS_AS(op_apply(p, u), ArgumentError);
    auto q = SymbolField::interior(g, [](auto&, auto&) { return cplx(1); }, 0);
    CHECK_THROWS_AS(op_apply(q, u), ArgumentError);
  }
}

TEST_CASE("symbol smoothing") {
  GridSpec g = GridSpec::strip(128, 8);
  SUBCASE("delta range") {
    auto p = SymbolField::boundary(g, [](auto&, auto&) { return cplx(1); }, 0);
    CHECK_THROWS_AS(symbol_smooth(p, 0.0), ArgumentError);
    CHECK_THROWS_AS(symbol_smooth(p, 1.0), ArgumentError);
  }
  SUBCASE("x-independent symbol has no rough part") {
    auto p = SymbolField::boundary(g, [](auto&, auto& xi) { return cplx(br(xi)); }, 1);
    auto s = symbol_smooth(p, 0.5);
    CHECK(s.flat.values.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("band-limited coefficient is reproduced") {
    auto p = SymbolField::boundary(g, [](auto& x, auto& xi) { return (1.0 + 0.3 * std::cos(x[0])) * br(xi); }, 1);
    auto s = symbol_smooth(p, 0.5);
    CHECK((s.sharp.values + s.flat.values - p.values).cwiseAbs().maxCoeff() == 0.0);
    const auto fit = symbol_band_order(s.flat, 0, 6);
    for (double nrm : fit.norms) CHECK(nrm <= 1e-8);
  }
  SUBCASE("rough coefficient: rough part gains tau * delta orders") {
    GridSpec gl = GridSpec::strip(512, 8);
    const double tau = 0.6, delta = 0.5;
    auto p = SymbolField::boundary(gl, [tau](auto& x, auto& xi) { return weierstrass(x[0], tau, 512) * br(xi); }, 1);
    p.tau = tau;
    auto s = symbol_smooth(p, delta);
    CHECK(s.flat.order == doctest::Approx(1 - tau * delta));
    CHECK((s.sharp.values + s.flat.values - p.values).cwiseAbs().maxCoeff() < 1e-13);
    auto op = [&](const CVec& u) { return op_apply(s.flat, PeriodicSamples{s.flat.shape, s.flat.periods, u}).values; };
    const auto fit = probe_band_order(op, p.shape, p.periods, 3, 8, RVec::Constant(512, 2 * kPi / 512));
    const double gain = 1.0 - fit.order;
    MESSAGE("fitted rough-part order " << fit.order);
    CHECK(std::abs(gain - tau * delta) <= 0.2 * tau * delta);
  }
  SUBCASE("smoothed symbols satisfy the discrete estimates uniformly") {
    std::array<double, 3> prev{};
    for (int n : {128, 256}) {
      GridSpec gn = GridSpec::strip(n, 8);
      auto p = SymbolField::boundary(gn, [](auto& x, auto& xi) { return rough(x[0], 0.6) * br(xi); }, 1);
      auto c = symbol_estimates(symbol_smooth(p, 0.5).sharp);
      for (double v : c) CHECK(std::isfinite(v));
      if (n == 256)
        for (int a = 0; a < 3; ++a) CHECK(c[a] < 2.0 * prev[a]);
      prev = c;
    }
  }
}

TEST_CASE("order reducers") {
  GridSpec g = GridSpec::strip(32, 16);
  std::mt19937_64 rng(5);
  SUBCASE("boundary multiplier and its inverse") {
    SpectralField v = SpectralField::boundary(g);
    v.values = la::random_complex(32, 1, rng);
    CHECK(order_reduce({0.0, ReducerDirection::boundary}, v).values == v.values);
    auto back = order_reduce({-1.3, ReducerDirection::boundary}, order_reduce({1.3, ReducerDirection::boundary}, v));
    CHECK((back.values - v.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("interior reducer pairs compose to the identity") {
    SpectralField u = SpectralField::interior(g);
    u.values = la::random_complex(g.interior_size(), 1, rng);
    CHECK(order_reduce({0.0, ReducerDirection::minus_plus}, u).values == u.values);
    for (int r : {1, 2, 3}) {
      auto a = order_reduce({double(-r), ReducerDirection::minus_plus}, order_reduce({double(r), ReducerDirection::minus_plus}, u));
      auto b = order_reduce({double(r), ReducerDirection::minus_plus}, order_reduce({double(-r), ReducerDirection::minus_plus}, u));
      CHECK((a.values - u.values).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((b.values - u.values).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK_THROWS_AS(order_reduce({0.5, ReducerDirection::minus_plus}, u), ArgumentError);
  }
  SUBCASE("interior reducer is an isomorphism between Sobolev levels") {
    std::uniform_real_distribution<double> U(-1, 1);
    GridSpec gf = GridSpec::strip(64, 64);
    for (int trial = 0; trial < 6; ++trial) {
      const double a1 = U(rng), a2 = U(rng), a3 = U(rng);
      auto u = interior_fn(gf, [&](double x, double y) {
        const double bump = std::pow(0.5 * (1 + std::cos(kPi * y)), 2);
        return cplx(a1 + a2 * std::cos(x) + a3 * std::sin(3 * x), 0) * bump;
      });
      for (int r : {1, 2}) {
        auto lu = order_reduce({double(r), ReducerDirection::minus_plus}, u);
        const double ratio = grid::sobolev_norm(lu, 0.0) / grid::sobolev_norm(u, r);
        CHECK(ratio > 0.25);
        CHECK(ratio < 4.0);
      }
    }
  }
}

TEST_CASE("Poisson operators") {
  GridSpec g = GridSpec::strip(32, 32);
  std::mt19937_64 rng(9);
  SpectralField v = SpectralField::boundary(g);
  v.values = la::random_complex(32, 1, rng);

  SUBCASE("semigroup kernel is the lift") {
    auto k = PoissonSymbolKernel::semigroup(g);
    CHECK((poisson_apply(k, v).values - grid::lift_semigroup(v).values).cwiseAbs().maxCoeff() < 1e-12);
    auto c = poisson_estimates(k);
    for (double x : c) {
      CHECK(x > 0.1);
      CHECK(x < 2.0);
    }
  }
  SUBCASE("y e^{-<xi> y}: zero trace, normal derivative trace v") {
    std::vector<double> errs;
    for (int nn : {32, 64}) {
      GridSpec gn = GridSpec::strip(16, nn);
      auto w = boundary_fn(gn, [](double x) { return std::cos(x) + kI * std::sin(2 * x); });
      auto k = PoissonSymbolKernel::sample(
          gn, [](double, double xi, double y) { return cplx(y * std::exp(-std::sqrt(1 + xi * xi) * y)); }, -1);
      auto out = poisson_apply(k, w);
      CHECK(grid::trace_gamma0(out).values.cwiseAbs().maxCoeff() < 1e-14);
      auto sym1 = SymbolField::boundary(gn, [](auto&, auto&) { return cplx(1); }, 0);
      auto d1 = trace_apply({{SymbolField::boundary(gn, [](auto&, auto&) { return cplx(0); }, 0), sym1}, {}, 0}, out);
      errs.push_back((d1.values - w.values).cwiseAbs().maxCoeff());
    }
    CHECK(errs[1] < 0.3 * errs[0]);
    CHECK(errs[1] < 1e-2);
  }
  SUBCASE("rough amplitude factors out") {
    auto k = PoissonSymbolKernel::sample(
        g, [](double x, double xi, double y) { return cplx(rough(x, 0.4) * std::exp(-std::sqrt(1 + xi * xi) * y)); }, 0);
    auto lift = grid::lift_semigroup(v);
    auto out = poisson_apply(k, v);
    const auto x = g.tangential_axis();
    double err = 0;
    for (int j = 0; j < g.layers(); ++j)
      for (int i = 0; i < 32; ++i) err = std::max(err, std::abs(out.at(i, j) - rough(x[i], 0.4) * lift.at(i, j)));
    CHECK(err < 1e-12);
  }
  SUBCASE("boundedness is uniform in the mesh") {
    for (double s : {0.0, 0.5, 1.0}) {
      std::vector<double> norms;
      for (int n : {16, 32, 64}) norms.push_back(poisson_operator_norm(PoissonSymbolKernel::semigroup(GridSpec::strip(n, n)), s));
      const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
      MESSAGE("s=" << s << " norms " << norms[0] << " " << norms[1] << " " << norms[2]);
      CHECK(*hi / *lo < 1.5);
    }
  }
  SUBCASE("kernel smoothing gains tau * delta orders") {
    // the normal grid has to resolve e^{-<xi> y} on every probed band
    const int nt = 128;
    GridSpec gl = GridSpec::strip(nt, 256);
    const double tau = 0.6, delta = 0.5;
    auto k = PoissonSymbolKernel::sample(
        gl, [tau](double x, double xi, double y) { return cplx(weierstrass(x, tau, nt) * std::exp(-std::sqrt(1 + xi * xi) * y)); }, 0);
    k.tau = tau;
    auto s = kernel_smooth(k, delta);
    CHECK(s.flat.order == doctest::Approx(-tau * delta));
    RVec w(gl.interior_size());
    const double hp = gl.periods[0] / nt;
    for (int j = 0; j < gl.layers(); ++j)
      w.segment(j * nt, nt).setConstant(hp * ((j == 0 || j == gl.points_normal) ? 0.5 : 1.0) * gl.h_normal());
    auto op = [&](const CVec& b) {
      SpectralField in = SpectralField::boundary(gl);
      in.values = b;
      return poisson_apply(s.flat, in).values;
    };
    const auto fit = probe_band_order(op, gl.points_tangential, gl.periods, 2, 6, w);
    MESSAGE("fitted rough Poisson order " << fit.order);
    const double gain = -0.5 - fit.order;
    CHECK(std::abs(gain - tau * delta) <= 0.2 * tau * delta);
  }
}

TEST_CASE("trace operators") {
  GridSpec g = GridSpec::strip(16, 32);
  auto zero = SymbolField::boundary(g, [](auto&, auto&) { return cplx(0); }, 0);
  auto one = SymbolField::boundary(g, [](auto&, auto&) { return cplx(1); }, 0);
  auto u = interior_fn(g, [](double x, double y) { return std::exp(kI * 2.0 * x) * std::exp(-y) + std::cos(x) * y * y; });
  SUBCASE("plain trace") {
    auto t = trace_apply({{one}, {}, 0}, u);
    CHECK((t.values - grid::trace_gamma0(u).values).cwiseAbs().maxCoeff() < 1e-13);
  }
  SUBCASE("conormal pattern") {
    const double c = 0.7;
    auto s0 = SymbolField::boundary(g, [](auto& x, auto&) { return cplx(2.0 + std::sin(x[0])); }, 0);
    auto dprime = SymbolField::boundary(g, [c](auto&, auto& xi) { return cplx(c * xi[0]); }, 1);
    auto t = trace_apply({{dprime, s0}, {}, 0}, u);
    // d_n u(x, 0) = -e^{2ix}; D' u(x, 0) = 2 e^{2ix} - i * (-sin x) * 0 ... u(x,0) = e^{2ix}
    auto ex = boundary_fn(g, [c](double x) { return (2.0 + std::sin(x)) * (-std::exp(kI * 2.0 * x)) + c * 2.0 * std::exp(kI * 2.0 * x); });
    CHECK((t.values - ex.values).cwiseAbs().maxCoeff() < 2e-3);
  }
  SUBCASE("integral part by quadrature") {
    auto k = PoissonSymbolKernel::semigroup(g);
    auto f = interior_fn(g, [](double x, double y) { return std::exp(kI * 3.0 * x) * std::exp(-y); });
    auto t = trace_apply({{}, k, 0}, f);
    const double b = std::sqrt(10.0);
    const double ex = (1 - std::exp(-(b + 1))) / (b + 1);
    auto ref = boundary_fn(g, [ex](double x) { return ex * std::exp(kI * 3.0 * x); });
    CHECK((t.values - ref.values).cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("class limits") {
    CHECK_THROWS_AS(trace_apply({{one, one, one, one}, {}, 0}, u), ArgumentError);
    CHECK_THROWS_AS(trace_apply({{one}, {}, 0}, grid::trace_gamma0(u)), ArgumentError);
    // negative class is accepted and runs through the inverse reducer
    auto t = trace_apply({{one}, {}, -1}, u);
    CHECK(t.values.allFinite());
  }
}

TEST_CASE("chart sums of boundary operators") {
  GridSpec g = GridSpec::strip(64, 8);
  std::mt19937_64 rng(2);
  SpectralField u = SpectralField::boundary(g);
  u.values = la::random_complex(64, 1, rng);
  auto p = SymbolField::boundary(g, [](auto&, auto& xi) { return cplx(br(xi)); }, 1);
  const RVec ones = RVec::Ones(64);
  const auto x = g.tangential_axis();
  RVec phi1(64);
  for (int i = 0; i < 64; ++i) phi1(i) = std::pow(std::cos(0.5 * x[i]), 2);
  const RVec phi2 = ones - phi1;
  SUBCASE("one identity chart is the multiplier") {
    auto out = chart_boundary_psdo({{ones, ones, p}}, u);
    CHECK((out.values - grid::apply_multiplier(u, grid::FourierMultiplier::bracket(1)).values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("two overlapping charts telescope") {
    auto one = chart_boundary_psdo({{ones, ones, p}}, u);
    auto two = chart_boundary_psdo({{ones, phi1, p}, {ones, phi2, p}}, u);
    CHECK((one.values - two.values).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("weighted variant") {
    auto flat = geom::StripGeometry::flat(g);
    auto a = chart_boundary_psdo({{ones, phi1, p, &flat}, {ones, phi2, p, &flat}}, u, true);
    auto b = chart_boundary_psdo({{ones, phi1, p, &flat}, {ones, phi2, p, &flat}}, u, false);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-14);
    auto curved = geom::StripGeometry::build(
        geom::BoundaryGraph::from_function(g, [](double t) { return 0.2 * std::sin(t); }), geom::BoundaryGraph::flat(g));
    auto c = chart_boundary_psdo({{ones, ones, p, &curved}}, u, true);
    SpectralField ku = u;
    ku.values = u.values.cwiseProduct(curved.diffeo.kappa_bottom.values);
    auto ref = op_apply(p, ku);
    ref.values = ref.values.cwiseQuotient(curved.diffeo.kappa_bottom.values);
    CHECK((c.values - ref.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("partition deficit") {
    CHECK_THROWS_AS(chart_boundary_psdo({{ones, phi1, p}}, u), ArgumentError);
  }
}

TEST_CASE("composition remainders") {
  SUBCASE("x-independent symbols compose exactly") {
    GridSpec g = GridSpec::strip(64, 8);
    auto p1 = SymbolField::boundary(g, [](auto&, auto& xi) { return cplx(br(xi)); }, 1);
    auto p2 = SymbolField::boundary(g, [](auto&, auto& xi) { return kI * xi[0]; }, 1);
    auto rep = composition_remainder(p1, p2, 1, 5);
    CHECK(rep.negligible);
    CHECK(rep.pass);
    for (double nrm : rep.fit.norms) CHECK(nrm <= 1e-10);
  }
  SUBCASE("derivative of a rough coefficient times a derivative") {
    GridSpec g = GridSpec::strip(512, 8);
    const double tau = 0.5;
    auto p1 = SymbolField::boundary(g, [](auto&, auto& xi) { return kI * xi[0]; }, 1);
    auto p2 = SymbolField::boundary(g, [tau](auto& x, auto& xi) { return rough(x[0], tau) * kI * xi[0]; }, 1);
    p2.tau = tau;
    auto rep = composition_remainder(p1, p2, 3, 7);
    MESSAGE("fitted remainder order " << rep.fit.order);
    CHECK(!rep.negligible);
    CHECK(rep.pass);
    CHECK(rep.fit.order > 1.0);
  }
}

TEST_CASE("symbol catalog from json") {
  GridSpec g = GridSpec::strip(16, 8);
  auto p = symbol_from_json(R"({"kind":"boundary","family":"rough_bracket","order":1,"tau":0.5,"amplitude":0.5})", g);
  CHECK(p.order == 1.0);
  CHECK(p.tau == 0.5);
  CHECK(!p.x_independent());
  auto q = symbol_from_json(R"({"family":"bracket","order":-1})", g);
  CHECK(q.x_independent());
  auto d = symbol_from_json(R"({"kind":"interior","family":"constant","value":2})", g);
  CHECK(d.kind == SymbolKind::interior);
  CHECK((d.values.array() - 2.0).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(symbol_from_json(R"({"family":"nope"})", g), ArgumentError);
  CHECK_THROWS_AS(symbol_from_json(R"({"family":"samples","re":[[1,2]]})", g), ArgumentError);
  CHECK_THROWS_AS(symbol_from_json("{", g), ArgumentError);
}
