// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "kreinlab/block_tridiag.hpp"
#include "kreinlab/elliptic_model.hpp"
#include "kreinlab/errors.hpp"

#include <cmath>
#include <random>

using namespace kreinlab;
using namespace kreinlab::ell;
using geom::BoundaryGraph;
using geom::StripGeometry;
using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

namespace {

const cplx I(0.0, 1.0);

StripGeometry flat(int nt, int nn) { return StripGeometry::flat(GridSpec::strip(nt, nn)); }

StripGeometry curved(int nt, int nn, double amp = 0.1) {
  GridSpec g = GridSpec::strip(nt, nn);
  auto b = BoundaryGraph::from_function(g, [amp](double x) { return amp * std::sin(x); });
  auto t = BoundaryGraph::from_function(g, [amp](double x) { return 0.5 * amp * std::cos(x); });
  return StripGeometry::build(b, t);
}

// Field sampled from a function of the reference coordinates.
SpectralField ref_field(const GridSpec& g, const std::function<cplx(double, double)>& f) {
  SpectralField u = SpectralField::interior(g);
  const auto ax = g.tangential_axis(0);
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < g.tangential_size(); ++i) u.at(i, j) = f(ax[i], g.x_normal(j));
  return u;
}

// Field sampled from a function of the physical point.
SpectralField phys_field(const StripGeometry& geo, const std::function<cplx(double, double)>& f) {
  const GridSpec& g = geo.grid();
  SpectralField u = SpectralField::interior(g);
  for (int j = 0; j < g.layers(); ++j)
    for (int i = 0; i < g.tangential_size(); ++i) {
      const auto y = geo.point(i, j);
      u.at(i, j) = f(y[0], y[1]);
    }
  return u;
}

double interior_max_error(const SpectralField& a, const SpectralField& b) {
  const int n = a.grid.tangential_size(), nl = a.grid.layers();
  return (a.values.segment(n, n * (nl - 2)) - b.values.segment(n, n * (nl - 2))).cwiseAbs().maxCoeff();
}

CoefficientField general_coefficients() {
  CoefficientField c = CoefficientField::constant(Mat2{{{2.0, 0.3}, {0.1, 1.0 + 0.2 * I}}}, Vec2{0.2, -0.4 + 0.1 * I},
                                                  0.5 - 0.3 * I);
  // make it genuinely variable
  c.b = [](double y1, double y2) {
    return Mat2{{{2.0 + 0.3 * std::sin(y1) * std::cos(y2), 0.3}, {0.1, 1.0 + 0.2 * I + 0.1 * std::cos(y1)}}};
  };
  return c;
}

}  // namespace

TEST_CASE("laplacian eigenfunction is reproduced to second order") {
  const int k = 2;
  double prev = 0.0;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = flat(16, nn);
    const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
    CHECK(op.form.modal);
    const SpectralField u =
        ref_field(geo.grid(), [&](double x, double s) { return std::exp(I * double(k) * x) * std::sin(kPi * s); });
    SpectralField expect = u;
    expect.values *= double(k * k) + kPi * kPi;
    const double err = interior_max_error(op.apply(u), expect);
    CHECK(err < 0.1);
    if (prev > 0.0) CHECK(prev / err > 3.5);
    prev = err;
  }
}

TEST_CASE("assemble_A handle matches the operator") {
  const StripGeometry geo = curved(16, 16);
  const auto handle = assemble_A(general_coefficients(), geo);
  const EllipticOperator op = assemble(general_coefficients(), geo);
  const SpectralField u = ref_field(geo.grid(), [](double x, double s) { return std::cos(x) * s * s + I * s; });
  CHECK((handle.apply(u).values - op.apply(u).values).norm() < 1e-12 * op.apply(u).values.norm());
}

TEST_CASE("constant zero-order term adds c u on interior rows") {
  const StripGeometry geo = curved(16, 16);
  const cplx c(1.75, -0.5);
  const EllipticOperator a = assemble(CoefficientField::laplacian(), geo);
  const EllipticOperator b = assemble(CoefficientField::laplacian().with_lower_order({0.0, 0.0}, c), geo);
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  SpectralField u = SpectralField::interior(geo.grid());
  for (auto& x : u.values) x = cplx(nd(rng), nd(rng));
  SpectralField diff = b.apply(u);
  diff.values -= a.apply(u).values;
  SpectralField cu = u;
  cu.values *= c;
  CHECK(interior_max_error(diff, cu) < 1e-11);
}

TEST_CASE("rough symmetric coefficients give a self-adjoint form") {
  const StripGeometry geo = curved(16, 12);
  const EllipticOperator op = assemble(CoefficientField::rough_a11(0.3, 1.4), geo);
  CHECK_FALSE(op.form.modal);
  const CMat k = op.form.to_dense();
  CHECK((k - k.adjoint()).cwiseAbs().maxCoeff() < 1e-13 * k.cwiseAbs().maxCoeff());
  // first-order terms break it
  const EllipticOperator op2 = assemble(CoefficientField::rough_a11().with_lower_order({0.5, 0.0}, 0.0), geo);
  const CMat k2 = op2.form.to_dense();
  CHECK((k2 - k2.adjoint()).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("strong ellipticity constant") {
  const GridSpec g = GridSpec::strip(8, 8);
  CHECK(check_strong_ellipticity(CoefficientField::laplacian(), g) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(check_strong_ellipticity(CoefficientField::constant(Mat2{{{2.0, 0.0}, {0.0, 1.0}}}), g) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(check_strong_ellipticity(CoefficientField::constant(Mat2{{{1.0, 0.5}, {-0.5, 1.0}}}), g) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // Re x^T B x for B = [[1, 2], [0, 1]] has minimum 0 on x = (1, -1)/sqrt 2
  const auto bad = CoefficientField::constant(Mat2{{{1.0, 2.0}, {0.0, 1.0}}});
  CHECK_THROWS_AS(check_strong_ellipticity(bad, g), ModelError);
  try {
    check_strong_ellipticity(CoefficientField::constant(Mat2{{{-1.0, 0.0}, {0.0, 1.0}}}), g);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("xi = (1, 0)") != std::string::npos);
  }
  CHECK_THROWS_AS(assemble(bad, StripGeometry::flat(g)), ModelError);
}

TEST_CASE("green coefficients") {
  SUBCASE("laplacian") {
    const EllipticOperator op = assemble(CoefficientField::laplacian(), flat(16, 8));
    for (const auto& gd : op.green) {
      CHECK((gd.s0.array() - 1.0).abs().maxCoeff() < 1e-14);
      CHECK(gd.b1[0].cwiseAbs().maxCoeff() + gd.b1[1].cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  SUBCASE("diag(1, 4) flat") {
    const EllipticOperator op = assemble(CoefficientField::constant(Mat2{{{1.0, 0.0}, {0.0, 4.0}}}), flat(16, 8));
    for (const auto& gd : op.green) {
      CHECK((gd.s0.array() - 4.0).abs().maxCoeff() < 1e-14);
      CHECK(gd.b1[0].cwiseAbs().maxCoeff() + gd.b1[1].cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  SUBCASE("curved, B = I") {
    const EllipticOperator op = assemble(CoefficientField::laplacian(), curved(32, 8, 0.3));
    for (const auto& gd : op.green) {
      CHECK((gd.s0.array() - 1.0).abs().maxCoeff() < 1e-14);
      CHECK(gd.b1[0].cwiseAbs().maxCoeff() + gd.b1[1].cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  SUBCASE("inverse and lower bound") {
    const EllipticOperator op = assemble(general_coefficients(), curved(32, 8, 0.3));
    for (const auto& gd : op.green) {
      CHECK((gd.s0.cwiseProduct(gd.s0_inv).array() - 1.0).abs().maxCoeff() < 1e-10);
      CHECK(gd.s0.cwiseAbs().minCoeff() >= op.c0);
    }
  }
}

TEST_CASE("min |s0| converges under refinement") {
  // gamma = 0.3 sin x, B = diag(1, 4): s0 = (gamma'^2 + 4) / (1 + gamma'^2), smallest where |gamma'| = 0.3
  const double exact = (0.09 + 4.0) / 1.09;
  const auto c = CoefficientField::constant(Mat2{{{1.0, 0.0}, {0.0, 4.0}}});
  double prev = 0.0;
  for (int nt : {8, 16, 32, 64}) {
    GridSpec g = GridSpec::strip(nt, 8);
    auto b = BoundaryGraph::from_function(g, [](double x) { return 0.3 * std::sin(x); });
    const StripGeometry geo = StripGeometry::build(b, BoundaryGraph::flat(g));
    const GreenData gd = green_coefficients(c, geo, Component::bottom, 1.0);
    const double m = gd.s0.cwiseAbs().minCoeff();
    CHECK(m >= prev - 1e-12);
    CHECK(std::abs(m - exact) < 0.05 * exact);
    prev = m;
  }
}

TEST_CASE("conormal trace") {
  SUBCASE("u = x_n") {
    const StripGeometry geo = flat(16, 8);
    const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
    const SpectralField u = ref_field(geo.grid(), [](double, double s) { return cplx(s); });
    CHECK((conormal_trace(u, op, Component::bottom).values.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((conormal_trace(u, op, Component::top).values.array() + 1.0).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("decaying exponential, second order") {
    const int k = 3;
    double prev = 0.0;
    for (int nn : {16, 32, 64}) {
      const StripGeometry geo = flat(16, nn);
      const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
      const SpectralField u = ref_field(
          geo.grid(), [&](double x, double s) { return std::exp(I * double(k) * x) * std::exp(-double(k) * s); });
      SpectralField expect = grid::trace_gamma0(u);
      expect.values *= -double(k);
      const double err = (conormal_trace(u, op, Component::bottom).values - expect.values).cwiseAbs().maxCoeff();
      if (prev > 0.0) CHECK(prev / err > 3.5);
      prev = err;
    }
    CHECK(prev < 5e-3);
  }
  SUBCASE("primed trace adds b0' gamma_0 u") {
    const StripGeometry geo = curved(16, 16, 0.2);
    const Vec2 a{0.4 - 0.2 * I, -0.7};
    const auto base = CoefficientField::constant(Mat2{{{1.5, 0.2}, {0.2, 1.0}}});
    const EllipticOperator op0 = assemble(base, geo);
    const EllipticOperator op1 = assemble(base.with_lower_order(a, 0.0), geo);
    const SpectralField u = phys_field(geo, [](double y1, double y2) { return std::cos(y1) + I * y2 * y2; });
    for (Component c : {Component::bottom, Component::top}) {
      const auto nu = geo.normal(c);
      const SpectralField g0 = grid::trace_gamma0(u, c);
      const CVec diff = conormal_trace(u, op1, c, true).values - conormal_trace(u, op0, c, true).values;
      for (int i = 0; i < 16; ++i) {
        const cplx b0 = nu[0](i) * std::conj(a[0]) + nu[1](i) * std::conj(a[1]);
        CHECK(std::abs(diff(i) - b0 * g0.values(i)) < 1e-12);
      }
      // the unprimed trace has no zero-order part
      CHECK((conormal_trace(u, op1, c).values - conormal_trace(u, op0, c).values).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("green identity for interior bubbles is exact") {
  const StripGeometry geo = curved(16, 16);
  const EllipticOperator op = assemble(general_coefficients(), geo);
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  auto bubble = [&] {
    SpectralField u = SpectralField::interior(geo.grid());
    for (int j = 5; j <= 11; ++j)
      for (int i = 0; i < 16; ++i) u.at(i, j) = cplx(nd(rng), nd(rng));
    return u;
  };
  const SpectralField u = bubble(), v = bubble();
  CHECK(greens_identity_residual(u, v, op) < 1e-10);
}

TEST_CASE("green identity, laplacian on the flat strip, second order") {
  double prev = 0.0;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = flat(16, nn);
    const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
    const SpectralField u = ref_field(geo.grid(), [](double x, double s) { return std::exp(I * x) * std::sin(s); });
    const SpectralField v = ref_field(geo.grid(), [](double, double s) { return cplx(std::cos(s)); });
    const double r = greens_identity_residual(u, v, op);
    if (prev > 1e-13) CHECK(prev / r > 3.5);
    prev = r;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("green identity, general coefficients on a curved strip") {
  std::vector<double> res;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = curved(32, nn);
    const EllipticOperator op = assemble(general_coefficients(), geo);
    const SpectralField u =
        phys_field(geo, [](double y1, double y2) { return std::exp(I * y1) * (1.0 + y2 * y2) + y2; });
    const SpectralField v = phys_field(geo, [](double y1, double y2) { return std::cos(2 * y1) * std::exp(-y2) + I; });
    res.push_back(greens_identity_residual(u, v, op));
  }
  CHECK(res[0] / res[1] > 3.0);
  CHECK(res[1] / res[2] > 3.0);
}

TEST_CASE("green identity needs the surface measure") {
  std::vector<double> with, without;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = curved(32, nn, 0.3);
    const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
    const SpectralField u = phys_field(geo, [](double y1, double y2) { return std::sin(y1) + y2 * y2; });
    const SpectralField v = phys_field(geo, [](double y1, double y2) { return std::cos(y1) * (1.0 + y2); });
    with.push_back(greens_identity_residual(u, v, op));
    without.push_back(greens_identity_residual(u, v, op, GreenOptions{false}));
  }
  CHECK(with[2] < 0.3 * with[0]);
  CHECK(without[2] > 0.5 * without[0]);
  CHECK(without[2] > 10.0 * with[2]);
}

TEST_CASE("randomized discrete duality") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    const double p1 = ud(rng), p2 = ud(rng), p3 = ud(rng);
    auto u_fn = [=](double y1, double y2) { return std::exp(I * p1 * y2) * std::cos(y1 + p2) + p3 * y2; };
    auto v_fn = [=](double y1, double y2) { return std::sin(2 * y1) * (p2 + y2) + I * p1 * std::exp(-y2); };
    std::vector<double> res;
    for (int nn : {16, 32}) {
      const StripGeometry geo = curved(32, nn);
      const EllipticOperator op = assemble(general_coefficients(), geo);
      res.push_back(greens_identity_residual(phys_field(geo, u_fn), phys_field(geo, v_fn), op));
    }
    CHECK(res[1] < 0.4 * res[0] + 1e-12);
  }
}

TEST_CASE("discrete form agrees with the continuum form for fields vanishing on the boundary") {
  // u = e^{ix} sin(pi s), v = e^{ix} s (1 - s) on the flat strip; x-integrals are analytic
  const cplx b11 = 2.0, b12 = 0.3, b21 = 0.1, b22 = 1.0 + 0.2 * I;
  const Vec2 a{0.2, -0.4 + 0.1 * I};
  const cplx a0 = 0.5 - 0.3 * I;
  const auto c = CoefficientField::constant(Mat2{{{b11, b12}, {b21, b22}}}, a, a0);
  auto us = [](double s) { return std::sin(kPi * s); };
  auto dus = [](double s) { return kPi * std::cos(kPi * s); };
  auto vs = [](double s) { return s * (1 - s); };
  auto dvs = [](double s) { return 1 - 2 * s; };
  // d_1 u = i u, conj(d_1 v) = -i conj(v)
  auto integrand = [&](double s) {
    const cplx g1u = I * us(s), g2u = dus(s), g1v = -I * vs(s), g2v = dvs(s);
    return b11 * g1u * g1v + b12 * g2u * g1v + b21 * g1u * g2v + b22 * g2u * g2v + (a[0] * g1u + a[1] * g2u) * vs(s) +
           a0 * us(s) * vs(s);
  };
  // composite Simpson, 4000 cells
  const int m = 4000;
  cplx acc = integrand(0.0) + integrand(1.0);
  for (int i = 1; i < m; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(double(i) / m);
  const cplx exact = 2.0 * kPi * acc / (3.0 * m);
  double prev = 0.0;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = flat(16, nn);
    const EllipticOperator op = assemble(c, geo);
    const SpectralField u = ref_field(geo.grid(), [&](double x, double s) { return std::exp(I * x) * us(s); });
    const SpectralField v = ref_field(geo.grid(), [&](double x, double s) { return std::exp(I * x) * vs(s); });
    const double err = std::abs(volume_inner(op.apply(u), v, op) - exact);
    if (prev > 0.0) CHECK(prev / err > 3.5);
    prev = err;
  }
  CHECK(prev < 1e-3 * std::abs(exact));
}

TEST_CASE("formal adjoint is an involution") {
  CoefficientField c;
  c.b = [](double y1, double y2) { return Mat2{{{1.5 + 0.25 * I, y1 * 0.5 + I}, {0.25 - 0.5 * I, 2.0 + y2}}}; };
  c.a = [](double y1, double) { return Vec2{0.5 - 0.25 * I, y1}; };
  c.a0 = [](double, double y2) { return 0.75 + 0.5 * I * y2; };
  c.div_a = [](double, double) { return cplx(0.5, 0.25); };
  const CoefficientField cc = c.adjoint().adjoint();
  for (double y1 : {0.0, 1.0, 2.5})
    for (double y2 : {0.0, 0.5}) {
      const Mat2 b = c.b(y1, y2), bb = cc.b(y1, y2);
      for (int r = 0; r < 2; ++r)
        for (int s = 0; s < 2; ++s) CHECK(b[r][s] == bb[r][s]);
      CHECK(c.a(y1, y2)[0] == cc.a(y1, y2)[0]);
      CHECK(c.a(y1, y2)[1] == cc.a(y1, y2)[1]);
      CHECK(c.a0(y1, y2) == cc.a0(y1, y2));
      CHECK(c.div_a(y1, y2) == cc.div_a(y1, y2));
    }
  const CoefficientField ca = c.adjoint();
  CHECK(ca.b(1.0, 0.5)[0][1] == std::conj(c.b(1.0, 0.5)[1][0]));
  CHECK(ca.a(1.0, 0.5)[0] == -std::conj(c.a(1.0, 0.5)[0]));
}

TEST_CASE("adjoint operator assembles the transposed form") {
  const StripGeometry geo = curved(16, 12);
  const auto c = general_coefficients();
  const EllipticOperator op = assemble(c, geo);
  const CMat k = op.form.to_dense(), ka = op.form_adjoint.to_dense();
  CHECK((k.adjoint() - ka).cwiseAbs().maxCoeff() < 1e-14 * k.cwiseAbs().maxCoeff());
}

TEST_CASE("flux conormal of the laplacian approximates the normal derivative") {
  double prev = 0.0;
  for (int nn : {16, 32, 64}) {
    const StripGeometry geo = flat(16, nn);
    const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
    const SpectralField u = ref_field(geo.grid(), [](double x, double s) { return std::exp(I * x) * std::cosh(s); });
    const CVec chi = op.flux_conormal(u.values);
    // interior normal derivative: sinh(0) = 0 at the bottom, -sinh(1) at the top
    CVec expect(32);
    const auto ax = geo.grid().tangential_axis(0);
    for (int i = 0; i < 16; ++i) {
      expect(i) = 0.0;
      expect(16 + i) = -std::exp(I * ax[i]) * std::sinh(1.0);
    }
    const double err = (chi - expect).cwiseAbs().maxCoeff();
    if (prev > 0.0) CHECK(prev / err > 1.8);
    prev = err;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("trace right inverse") {
  SUBCASE("zero data") {
    const StripGeometry geo = curved(16, 16);
    const EllipticOperator op = assemble(general_coefficients(), geo);
    const SpectralField z = SpectralField::boundary(geo.grid());
    CHECK(trace_right_inverse(z, z, op).values.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("laplacian, pure conormal data") {
    double prev = 0.0;
    for (int nn : {16, 32, 64}) {
      const StripGeometry geo = flat(16, nn);
      const EllipticOperator op = assemble(CoefficientField::laplacian(), geo);
      SpectralField phi = SpectralField::boundary(geo.grid());
      const auto ax = geo.grid().tangential_axis(0);
      for (int i = 0; i < 16; ++i) phi.values(i) = std::exp(2.0 * I * ax[i]);
      const SpectralField u = trace_right_inverse(phi, SpectralField::boundary(geo.grid()), op);
      CHECK(grid::trace_gamma0(u).values.cwiseAbs().maxCoeff() == 0.0);
      const double err = (conormal_trace(u, op, Component::bottom).values - phi.values).cwiseAbs().maxCoeff();
      if (prev > 0.0) CHECK(prev / err > 3.5);
      prev = err;
    }
    CHECK(prev < 1e-2);
  }
  SUBCASE("both traces, curved strip, both components") {
    for (Component comp : {Component::bottom, Component::top}) {
      double prev = 0.0;
      for (int nn : {16, 32, 64}) {
        const StripGeometry geo = curved(32, nn, 0.2);
        const EllipticOperator op = assemble(general_coefficients(), geo);
        SpectralField g = SpectralField::boundary(geo.grid()), z = SpectralField::boundary(geo.grid());
        const auto ax = geo.grid().tangential_axis(0);
        for (int i = 0; i < 32; ++i) g.values(i) = std::cos(ax[i]) + 0.5 * I * std::sin(2 * ax[i]);
        const SpectralField u = trace_right_inverse(z, g, op, comp);
        CHECK((grid::trace_gamma0(u, comp).values - g.values).cwiseAbs().maxCoeff() < 1e-13);
        const double err = conormal_trace(u, op, comp).values.cwiseAbs().maxCoeff();
        if (prev > 0.0) CHECK(prev / err > 3.0);
        prev = err;
      }
      CHECK(prev < 1e-2);
    }
  }
}

TEST_CASE("coefficient catalog from JSON") {
  CHECK(coefficient_catalog().size() == 4);
  for (const auto& name : coefficient_catalog())
    CHECK_NOTHROW(coefficient_from_json("{\"name\": \"" + name + "\", \"b\": [[1, 0], [0, 1]]}"));
  const auto d = coefficient_from_json(R"({"name": "diagonal", "b11": 1, "b22": 4, "a": [0.5, 0], "a0": 2})");
  CHECK(d.b(0.3, 0.2)[1][1] == 4.0);
  CHECK(d.a(0.3, 0.2)[0] == 0.5);
  CHECK(d.a0(0.3, 0.2) == 2.0);
  CHECK(d.has_first_order());
  const auto r = coefficient_from_json(R"({"name": "rough_a11", "amplitude": 0.3, "exponent": 0.8})");
  CHECK(r.q == doctest::Approx(5.0));
  CHECK(std::isinf(coefficient_from_json(R"({"name": "rough_a11"})").q));

  auto pointer_of = [](const std::string& text) {
    try {
      coefficient_from_json(text);
    } catch (const UsageError& e) {
      return e.pointer();
    }
    return std::string("no error");
  };
  CHECK(pointer_of(R"({"name": "nope"})") == "/name");
  CHECK(pointer_of(R"({"b": 1})") == "/name");
  CHECK(pointer_of(R"({"name": "constant", "b": [[1, 0], [0, "x"]]})") == "/b/1/1");
  CHECK(pointer_of(R"({"name": "laplacian", "a": [1]})") == "/a");
  CHECK(pointer_of(R"({"name": "diagonal", "b11": "one"})") == "/b11");
  CHECK_THROWS_AS(coefficient_from_json("{not json"), UsageError);
}

TEST_CASE("regularity gate") {
  const StripGeometry geo = flat(16, 8);
  CHECK_NOTHROW(check_regularity_gate(CoefficientField::rough_a11(0.3, 1.4), geo));
  // q = 5 gives 1 - 2/5 = 0.6 >= tau = 0.375
  CHECK_NOTHROW(check_regularity_gate(CoefficientField::rough_a11(0.3, 0.8), geo));
  // q = 2.5 gives 0.2 < tau
  CHECK_THROWS_AS(check_regularity_gate(CoefficientField::rough_a11(0.3, 0.6), geo), ModelError);
  CHECK_THROWS_AS(assemble(CoefficientField::rough_a11(0.3, 0.6), geo), ModelError);
}

TEST_CASE("block LU solves agree with dense LU") {
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  for (bool modal : {false, true}) {
    bt::BlockTridiag m = bt::BlockTridiag::zeros(6, 5, modal);
    auto rnd = [&](int r, int c) {
      CMat x(r, c);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) x(i, j) = cplx(nd(rng), nd(rng));
      return x;
    };
    for (int j = 0; j < 5; ++j) {
      if (modal) {
        m.mdiag[j] = rnd(6, 1).col(0).array() + 8.0;
        if (j < 4) {
          m.mupper[j] = rnd(6, 1).col(0);
          m.mlower[j] = rnd(6, 1).col(0);
        }
      } else {
        m.diag[j] = rnd(6, 6) + 8.0 * CMat::Identity(6, 6);
        if (j < 4) {
          m.upper[j] = rnd(6, 6);
          m.lower[j] = rnd(6, 6);
        }
      }
    }
    const CMat d = m.to_dense();
    const bt::BlockLU lu(m);
    const CMat b = rnd(30, 3);
    const CMat x = lu.solve(b), y = lu.solve_adjoint(b);
    CHECK((d * x - b).norm() < 1e-12 * b.norm());
    CHECK((d.adjoint() * y - b).norm() < 1e-12 * b.norm());
    CHECK((m.apply(x) - d * x).norm() < 1e-12 * b.norm());
    CHECK((m.adjoint().to_dense() - d.adjoint()).norm() < 1e-12 * d.norm());
    const double exact = d.cwiseAbs().colwise().sum().maxCoeff() * d.inverse().cwiseAbs().colwise().sum().maxCoeff();
    const double est = lu.condition_estimate();
    CHECK(est <= exact * (1 + 1e-10));
    CHECK(est >= exact / 3.0);
    CHECK(m.norm1() == doctest::Approx(d.cwiseAbs().colwise().sum().maxCoeff()).epsilon(1e-10));
  }
}

TEST_CASE("block LU reports singular pivots") {
  bt::BlockTridiag m = bt::BlockTridiag::zeros(4, 3, true);
  m.mdiag[0] = CVec::Ones(4);
  m.mdiag[1] = CVec::Ones(4);
  m.mdiag[2] = CVec::Ones(4);
  m.mdiag[1](2) = 0.0;
  const bt::BlockLU lu(m);
  CHECK_THROWS_AS(lu.solve(CVec(CVec::Ones(12))), SingularityError);
}

TEST_CASE("modal and dense assembly agree") {
  const StripGeometry geo = flat(16, 10);
  const auto c = CoefficientField::constant(Mat2{{{2.0, 0.3}, {0.1, 1.0}}}, Vec2{0.2, -0.4}, 0.5);
  const EllipticOperator op = assemble(c, geo);
  REQUIRE(op.form.modal);
  // a tiny tangential variation forces the dense path
  CoefficientField c2 = c;
  c2.b = [](double y1, double) { return Mat2{{{2.0 + 1e-9 * std::sin(y1), 0.3}, {0.1, 1.0}}}; };
  const EllipticOperator op2 = assemble(c2, geo);
  REQUIRE_FALSE(op2.form.modal);
  CHECK((op.form.to_dense() - op2.form.to_dense()).cwiseAbs().maxCoeff() < 1e-7);
}
