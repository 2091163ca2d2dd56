// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/elliptic_model.hpp"

#include "kreinlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <sstream>

namespace kreinlab::ell {

using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

// --- coefficients ---------------------------------------------------------------

namespace {
const auto kZeroVec = [](double, double) { return Vec2{0.0, 0.0}; };
const auto kZero = [](double, double) { return cplx(0.0); };
}  // namespace

CoefficientField CoefficientField::laplacian() {
  return constant(Mat2{{{1.0, 0.0}, {0.0, 1.0}}});
}

CoefficientField CoefficientField::constant(const Mat2& b, const Vec2& a, cplx a0) {
  CoefficientField c;
  c.name = "constant";
  c.b = [b](double, double) { return b; };
  c.a = [a](double, double) { return a; };
  c.a0 = [a0](double, double) { return a0; };
  c.div_a = kZero;
  return c;
}

CoefficientField CoefficientField::rough_a11(double amplitude, double exponent) {
  if (!(exponent > 0.0)) throw ArgumentError("rough_a11: exponent must be positive");
  CoefficientField c;
  c.name = "rough_a11";
  c.b = [amplitude, exponent](double y1, double) {
    return Mat2{{{1.0 + amplitude * std::pow(std::abs(std::sin(y1)), exponent), 0.0}, {0.0, 1.0}}};
  };
  c.a = kZeroVec;
  c.a0 = kZero;
  c.div_a = kZero;
  // d/dy |sin y|^e ~ |y|^{e-1} near the zeros: bounded for e >= 1, in L_q for q < 1/(1-e) otherwise
  c.q = exponent >= 1.0 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - exponent);
  return c;
}

CoefficientField CoefficientField::with_lower_order(const Vec2& a, cplx a0) const {
  CoefficientField c = *this;
  auto old_a = this->a;
  auto old_a0 = this->a0;
  c.a = [old_a, a](double y1, double y2) {
    Vec2 v = old_a(y1, y2);
    return Vec2{v[0] + a[0], v[1] + a[1]};
  };
  c.a0 = [old_a0, a0](double y1, double y2) { return old_a0(y1, y2) + a0; };
  return c;
}

bool CoefficientField::has_first_order() const {
  for (double y1 : {0.1, 1.3, 2.9, 4.4})
    for (double y2 : {0.05, 0.5, 0.95}) {
      const Vec2 v = a(y1, y2);
      if (std::abs(v[0]) + std::abs(v[1]) > 0.0) return true;
    }
  return false;
}

CoefficientField CoefficientField::adjoint() const {
  CoefficientField c = *this;
  auto b0 = b;
  auto a1 = a;
  auto z0 = a0;
  auto d0 = div_a;
  c.b = [b0](double y1, double y2) {
    const Mat2 m = b0(y1, y2);
    return Mat2{{{std::conj(m[0][0]), std::conj(m[1][0])}, {std::conj(m[0][1]), std::conj(m[1][1])}}};
  };
  c.a = [a1](double y1, double y2) {
    const Vec2 v = a1(y1, y2);
    return Vec2{-std::conj(v[0]), -std::conj(v[1])};
  };
  c.a0 = [z0, d0](double y1, double y2) { return std::conj(z0(y1, y2)) - std::conj(d0(y1, y2)); };
  c.div_a = [d0](double y1, double y2) { return -std::conj(d0(y1, y2)); };
  c.name = name + "'";
  return c;
}

std::vector<std::string> coefficient_catalog() { return {"laplacian", "diagonal", "constant", "rough_a11"}; }

namespace {

double number_at(const nlohmann::json& j, const std::string& key, double fallback, const std::string& ptr) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw UsageError("number expected", ptr + "/" + key);
  return j[key].get<double>();
}

}  // namespace

CoefficientField coefficient_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("coefficient JSON: ") + e.what(), "");
  }
  if (!j.is_object()) throw UsageError("object expected", "");
  if (!j.contains("name") || !j["name"].is_string()) throw UsageError("missing catalog name", "/name");
  const std::string name = j["name"].get<std::string>();
  CoefficientField c;
  if (name == "laplacian") {
    c = CoefficientField::laplacian();
  } else if (name == "diagonal") {
    const double b11 = number_at(j, "b11", 1.0, ""), b22 = number_at(j, "b22", 1.0, "");
    c = CoefficientField::constant(Mat2{{{b11, 0.0}, {0.0, b22}}});
  } else if (name == "constant") {
    if (!j.contains("b") || !j["b"].is_array() || j["b"].size() != 2) throw UsageError("2x2 array expected", "/b");
    Mat2 b{};
    for (int r = 0; r < 2; ++r) {
      const auto& row = j["b"][r];
      if (!row.is_array() || row.size() != 2) throw UsageError("row of two numbers expected", "/b/" + std::to_string(r));
      for (int s = 0; s < 2; ++s) {
        if (!row[s].is_number()) throw UsageError("number expected", "/b/" + std::to_string(r) + "/" + std::to_string(s));
        b[r][s] = row[s].get<double>();
      }
    }
    c = CoefficientField::constant(b);
  } else if (name == "rough_a11") {
    c = CoefficientField::rough_a11(number_at(j, "amplitude", 0.3, ""), number_at(j, "exponent", 1.4, ""));
  } else {
    throw UsageError("unknown coefficient '" + name + "'", "/name");
  }
  Vec2 a{0.0, 0.0};
  if (j.contains("a")) {
    if (!j["a"].is_array() || j["a"].size() != 2) throw UsageError("two numbers expected", "/a");
    for (int r = 0; r < 2; ++r) {
      if (!j["a"][r].is_number()) throw UsageError("number expected", "/a/" + std::to_string(r));
      a[r] = j["a"][r].get<double>();
    }
  }
  const cplx a0(number_at(j, "a0", 0.0, ""), number_at(j, "a0_imag", 0.0, ""));
  if (std::abs(a[0]) + std::abs(a[1]) + std::abs(a0) > 0.0) c = c.with_lower_order(a, a0);
  c.name = name;
  return c;
}

void check_regularity_gate(const CoefficientField& c, const geom::StripGeometry& g) {
  const int n = g.grid().dim;
  const double tau = std::min(g.bottom.tau(), g.top.tau());
  const double lhs = 1.0 - n / c.q;
  if (!(c.q > 2.0) || !(tau > 0.0) || lhs < tau) {
    std::ostringstream os;
    os << "regularity gate 1 - n/q >= tau > 0 fails: q = " << c.q << ", tau = " << tau;
    throw ModelError(os.str());
  }
}

namespace {

std::vector<double> axis_of(const GridSpec& g) { return g.tangential_axis(0); }

// Physical point of node (i, j).
std::array<double, 2> node_point(const geom::StripGeometry& g, const std::vector<double>& ax, int i, int j) {
  return {ax[i], g.diffeo.nodes.f(j, i)};
}

}  // namespace

double check_strong_ellipticity(const CoefficientField& c, const geom::StripGeometry& g) {
  const GridSpec& gs = g.grid();
  const auto ax = axis_of(gs);
  constexpr int kDirections = 128;
  double best = std::numeric_limits<double>::infinity();
  std::array<double, 4> worst{};
  for (int j = 0; j < gs.layers(); ++j)
    for (int i = 0; i < gs.tangential_size(); ++i) {
      const auto y = node_point(g, ax, i, j);
      const Mat2 b = c.b(y[0], y[1]);
      for (int k = 0; k < kDirections; ++k) {
        const double th = kPi * k / kDirections;
        const double x1 = std::cos(th), x2 = std::sin(th);
        const double v = std::real(b[0][0] * x1 * x1 + (b[0][1] + b[1][0]) * x1 * x2 + b[1][1] * x2 * x2);
        if (v < best) {
          best = v;
          worst = {y[0], y[1], x1, x2};
        }
      }
    }
  if (!(best > 0.0)) {
    std::ostringstream os;
    os << "strong ellipticity fails: Re xi^T B xi = " << best << " at x = (" << worst[0] << ", " << worst[1]
       << "), xi = (" << worst[2] << ", " << worst[3] << ")";
    throw ModelError(os.str());
  }
  return best;
}

double check_strong_ellipticity(const CoefficientField& c, const GridSpec& g) {
  return check_strong_ellipticity(c, geom::StripGeometry::flat(g));
}

GreenData green_coefficients(const CoefficientField& c, const geom::StripGeometry& g, Component comp, double c0) {
  const GridSpec& gs = g.grid();
  const int nt = gs.tangential_size();
  const int j0 = comp == Component::bottom ? 0 : gs.points_normal;
  const auto ax = axis_of(gs);
  const auto nu = g.normal(comp);
  GreenData d;
  d.component = comp;
  d.s0.resize(nt);
  d.s0_inv.resize(nt);
  d.b0_prime.resize(nt);
  for (auto& v : d.b1) v.resize(nt);
  for (auto& v : d.b1_prime) v.resize(nt);
  for (int i = 0; i < nt; ++i) {
    const auto y = node_point(g, ax, i, j0);
    const Mat2 b = c.b(y[0], y[1]);
    const Vec2 a = c.a(y[0], y[1]);
    const double n1 = nu[0](i), n2 = nu[1](i);
    const cplx r1 = n1 * b[0][0] + n2 * b[1][0], r2 = n1 * b[0][1] + n2 * b[1][1];
    const cplx s0 = r1 * n1 + r2 * n2;
    if (std::abs(s0) < 0.5 * c0) {
      std::ostringstream os;
      os << "|s0| = " << std::abs(s0) << " below c0/2 at x' = " << y[0];
      throw ModelError(os.str());
    }
    d.s0(i) = s0;
    d.s0_inv(i) = 1.0 / s0;
    d.b1[0](i) = r1 - s0 * n1;
    d.b1[1](i) = r2 - s0 * n2;
    const cplx q1 = n1 * std::conj(b[0][0]) + n2 * std::conj(b[0][1]);
    const cplx q2 = n1 * std::conj(b[1][0]) + n2 * std::conj(b[1][1]);
    const cplx sp = q1 * n1 + q2 * n2;
    d.b1_prime[0](i) = q1 - sp * n1;
    d.b1_prime[1](i) = q2 - sp * n2;
    d.b0_prime(i) = n1 * std::conj(a[0]) + n2 * std::conj(a[1]);
  }
  return d;
}

// --- reference coefficients and the discrete form ----------------------------

ReferenceCoefficients reference_coefficients(const CoefficientField& c, const geom::StripGeometry& g) {
  const GridSpec& gs = g.grid();
  const int nt = gs.tangential_size(), nl = gs.layers(), n = nt * nl;
  const auto ax = axis_of(gs);
  ReferenceCoefficients rc;
  for (auto& v : rc.bf) v.resize(n);
  for (auto& v : rc.beta) v.resize(n);
  rc.mass.resize(n);
  const auto& s = g.diffeo.nodes;
  bool j_constant = true;
  for (int j = 0; j < nl; ++j)
    for (int i = 0; i < nt; ++i) {
      const int k = j * nt + i;
      const auto y = node_point(g, ax, i, j);
      const Mat2 b = c.b(y[0], y[1]);
      const Vec2 a = c.a(y[0], y[1]);
      const geom::PhiEntries p = geom::phi_at(s, j, i);
      const double J = s.fn(j, i);
      if (std::abs(J - s.fn(j, 0)) > 1e-13 * std::abs(J)) j_constant = false;
      const double phi[2][2] = {{p.p11, p.p12}, {p.p21, p.p22}};
      for (int pp = 0; pp < 2; ++pp)
        for (int qq = 0; qq < 2; ++qq) {
          cplx acc = 0.0;
          for (int r = 0; r < 2; ++r)
            for (int t = 0; t < 2; ++t) acc += phi[r][pp] * b[r][t] * phi[t][qq];
          rc.bf[2 * pp + qq](k) = J * acc;
        }
      for (int qq = 0; qq < 2; ++qq) rc.beta[qq](k) = J * (phi[0][qq] * a[0] + phi[1][qq] * a[1]);
      rc.mass(k) = J * c.a0(y[0], y[1]);
    }
  auto layer_constant = [&](const CVec& v) {
    const double scale = std::max(v.cwiseAbs().maxCoeff(), 1e-300);
    for (int j = 0; j < nl; ++j)
      for (int i = 1; i < nt; ++i)
        if (std::abs(v(j * nt + i) - v(j * nt)) > 1e-13 * scale) return false;
    return true;
  };
  rc.tangentially_constant = j_constant;
  for (const auto& v : rc.bf) rc.tangentially_constant = rc.tangentially_constant && layer_constant(v);
  for (const auto& v : rc.beta) rc.tangentially_constant = rc.tangentially_constant && layer_constant(v);
  rc.tangentially_constant = rc.tangentially_constant && layer_constant(rc.mass);
  return rc;
}

namespace {

// Tangential building blocks of the form: mass(c) = diag c, dd(c) = D^T diag c D,
// dleft(c) = D^T diag c, dright(c) = diag c D.
struct DenseAlgebra {
  RMat d;
  CMat mass(const CVec& c) const { return CMat(c.asDiagonal()); }
  CMat dd(const CVec& c) const { return d.transpose().cast<cplx>() * c.asDiagonal() * d.cast<cplx>(); }
  CMat dleft(const CVec& c) const { return d.transpose().cast<cplx>() * c.asDiagonal(); }
  CMat dright(const CVec& c) const { return c.asDiagonal() * d.cast<cplx>(); }
};

struct ModalAlgebra {
  CVec kd;  // symbol of D in FFT order (i k, zero at Nyquist)
  CVec mass(const CVec& c) const { return CVec::Constant(kd.size(), c(0)); }
  CVec dd(const CVec& c) const { return (-c(0)) * kd.cwiseProduct(kd); }
  CVec dleft(const CVec& c) const { return (-c(0)) * kd; }
  CVec dright(const CVec& c) const { return c(0) * kd; }
};

template <class Alg, class Get>
void fill_form(const Alg& alg, Get&& block, const ReferenceCoefficients& rc, const GridSpec& gs) {
  const int nt = gs.tangential_size(), nl = gs.layers();
  const double h = gs.h_normal(), hp = gs.tangential_cell();
  auto layer = [&](const CVec& v, int j) -> CVec { return v.segment(j * nt, nt); };
  auto cell = [&](const CVec& v, int j) -> CVec { return 0.5 * (layer(v, j) + layer(v, j + 1)); };
  for (int j = 0; j < nl; ++j) {
    const double w = (j == 0 || j == nl - 1) ? 0.5 : 1.0;
    block(j, j) += (h * w * hp) * (alg.dd(layer(rc.bf[0], j)) + alg.dright(layer(rc.beta[0], j)) +
                                   alg.mass(layer(rc.mass, j)));
  }
  const double hh = h * hp;
  for (int j = 0; j + 1 < nl; ++j) {
    const auto ss = alg.mass(cell(rc.bf[3], j));
    block(j, j) += (hh / (h * h)) * ss;
    block(j + 1, j + 1) += (hh / (h * h)) * ss;
    block(j, j + 1) -= (hh / (h * h)) * ss;
    block(j + 1, j) -= (hh / (h * h)) * ss;
    // bf_ts d_s u d_t conj(v): v averaged over the cell
    const auto ts = alg.dleft(cell(rc.bf[1], j));
    for (int r : {j, j + 1}) {
      block(r, j + 1) += (0.5 * hh / h) * ts;
      block(r, j) -= (0.5 * hh / h) * ts;
    }
    // bf_st d_t u d_s conj(v): u averaged over the cell
    const auto st = alg.dright(cell(rc.bf[2], j));
    for (int s : {j, j + 1}) {
      block(j + 1, s) += (0.5 * hh / h) * st;
      block(j, s) -= (0.5 * hh / h) * st;
    }
    const auto bs = alg.mass(cell(rc.beta[1], j));
    for (int r : {j, j + 1}) {
      block(r, j + 1) += (0.5 * hh / h) * bs;
      block(r, j) -= (0.5 * hh / h) * bs;
    }
  }
}

}  // namespace

bt::BlockTridiag assemble_form(const ReferenceCoefficients& rc, const GridSpec& gs) {
  const int nt = gs.tangential_size(), nl = gs.layers();
  bt::BlockTridiag k = bt::BlockTridiag::zeros(nt, nl, rc.tangentially_constant);
  if (k.modal) {
    ModalAlgebra alg;
    const auto wn = grid::wavenumbers(nt, gs.periods[0]);
    alg.kd.resize(nt);
    for (int m = 0; m < nt; ++m) alg.kd(m) = (nt % 2 == 0 && m == nt / 2) ? cplx(0.0) : kI * wn[m];
    fill_form(
        alg,
        [&](int r, int s) -> CVec& { return r == s ? k.mdiag[r] : (s == r + 1 ? k.mupper[r] : k.mlower[s]); },
        rc, gs);
  } else {
    DenseAlgebra alg{grid::derivative_matrix(nt, gs.periods[0])};
    fill_form(
        alg, [&](int r, int s) -> CMat& { return r == s ? k.diag[r] : (s == r + 1 ? k.upper[r] : k.lower[s]); },
        rc, gs);
  }
  return k;
}

EllipticOperator assemble(const CoefficientField& c, const geom::StripGeometry& g) {
  const GridSpec& gs = g.grid();
  gs.validate();
  if (gs.dim != 2) throw ArgumentError("assemble: only n = 2 strips are supported");
  check_regularity_gate(c, g);
  EllipticOperator op;
  op.coeff = c;
  op.geo = g;
  op.c0 = check_strong_ellipticity(c, g);
  const ReferenceCoefficients rc = reference_coefficients(c, g);
  op.form = assemble_form(rc, gs);
  op.form_adjoint = op.form.adjoint();
  const int nt = gs.tangential_size(), nl = gs.layers();
  const double h = gs.h_normal(), hp = gs.tangential_cell();
  op.node_weight.resize(nt * nl);
  op.trap_weight.resize(nt * nl);
  for (int j = 0; j < nl; ++j)
    for (int i = 0; i < nt; ++i) {
      const double J = g.diffeo.nodes.fn(j, i);
      op.node_weight(j * nt + i) = hp * h * J;
      op.trap_weight(j * nt + i) = hp * h * J * ((j == 0 || j == nl - 1) ? 0.5 : 1.0);
    }
  op.omega.resize(2 * nt);
  for (int i = 0; i < nt; ++i) {
    op.omega(i) = hp * g.kappa(Component::bottom).values(i).real();
    op.omega(nt + i) = hp * g.kappa(Component::top).values(i).real();
  }
  op.green[0] = green_coefficients(c, g, Component::bottom, op.c0);
  op.green[1] = green_coefficients(c, g, Component::top, op.c0);
  return op;
}

std::vector<int> EllipticOperator::boundary_indices() const {
  const int n = nt(), top = grid().points_normal * n;
  std::vector<int> idx(2 * n);
  for (int i = 0; i < n; ++i) {
    idx[i] = i;
    idx[n + i] = top + i;
  }
  return idx;
}

namespace {

CVec form_apply(const EllipticOperator& op, const CVec& u, bool adjoint) {
  return adjoint ? op.form_adjoint.apply(u) : op.form.apply(u);
}

}  // namespace

SpectralField EllipticOperator::apply(const SpectralField& u, bool adjoint) const {
  if (u.location != grid::Location::interior || !(u.grid == grid())) throw ArgumentError("apply: interior field expected");
  const int n = nt(), nl = layers();
  if (nl < 5) throw ArgumentError("apply: need at least four normal cells");
  const CVec ku = form_apply(*this, u.values, adjoint);
  SpectralField out = SpectralField::interior(grid());
  out.values = ku.cwiseQuotient(node_weight.cast<cplx>());
  auto row = [&](int j) -> CVec { return out.values.segment(j * n, n); };
  out.values.segment(0, n) = 3.0 * row(1) - 3.0 * row(2) + row(3);
  out.values.segment((nl - 1) * n, n) = 3.0 * row(nl - 2) - 3.0 * row(nl - 3) + row(nl - 4);
  return out;
}

CVec EllipticOperator::flux_conormal(const CVec& u, bool adjoint) const {
  const int n = nt();
  const CVec ku = form_apply(*this, u, adjoint);
  CVec out(2 * n);
  out.head(n) = -ku.head(n).cwiseQuotient(omega.head(n).cast<cplx>());
  out.tail(n) = -ku.tail(n).cwiseQuotient(omega.tail(n).cast<cplx>());
  return out;
}

LinearMapHandle EllipticOperator::a_max(bool adjoint) const {
  LinearMapHandle m;
  m.grid = grid();
  m.domain = m.codomain = grid::Location::interior;
  auto self = std::make_shared<EllipticOperator>(*this);
  m.fn = [self, adjoint](const CVec& x) {
    SpectralField u = SpectralField::interior(self->grid());
    u.values = x;
    return self->apply(u, adjoint).values;
  };
  return m;
}

LinearMapHandle assemble_A(const CoefficientField& c, const geom::StripGeometry& g) { return assemble(c, g).a_max(); }

// --- traces and Green's formula ---------------------------------------------

SpectralField conormal_trace(const SpectralField& u, const EllipticOperator& op, Component comp, bool primed) {
  if (u.location != grid::Location::interior) throw ArgumentError("conormal_trace: interior field expected");
  const GridSpec& gs = op.grid();
  const int n = gs.tangential_size(), nl = gs.layers();
  const double h = gs.h_normal();
  const bool bottom = comp == Component::bottom;
  const int j0 = bottom ? 0 : nl - 1, j1 = bottom ? 1 : nl - 2, j2 = bottom ? 2 : nl - 3;
  auto layer = [&](int j) -> CVec { return u.values.segment(j * n, n); };
  const CVec g0 = layer(j0);
  const CVec us = (bottom ? 1.0 : -1.0) * (-3.0 * g0 + 4.0 * layer(j1) - layer(j2)) / (2.0 * h);
  const CVec ut = grid::differentiate(g0, gs.periods[0]);
  const auto nu = op.geo.normal(comp);
  const RVec& slope = bottom ? op.geo.diffeo.slope_bottom : op.geo.diffeo.slope_top;
  const GreenData& gd = op.green[bottom ? 0 : 1];
  SpectralField out = SpectralField::boundary(gs);
  for (int i = 0; i < n; ++i) {
    const geom::PhiEntries p = geom::phi_at(op.geo.diffeo.nodes, j0, i);
    const cplx gy1 = p.p11 * ut(i) + p.p12 * us(i), gy2 = p.p21 * ut(i) + p.p22 * us(i);
    const cplx g1 = nu[0](i) * gy1 + nu[1](i) * gy2;
    const double kap = std::sqrt(1.0 + slope(i) * slope(i));
    const double t1 = 1.0 / kap, t2 = slope(i) / kap;
    const cplx dtau = ut(i) / kap;
    if (!primed) {
      out.values(i) = gd.s0(i) * g1 + (gd.b1[0](i) * t1 + gd.b1[1](i) * t2) * dtau;
    } else {
      out.values(i) = std::conj(gd.s0(i)) * g1 + (gd.b1_prime[0](i) * t1 + gd.b1_prime[1](i) * t2) * dtau +
                      gd.b0_prime(i) * g0(i);
    }
  }
  return out;
}

cplx volume_inner(const SpectralField& u, const SpectralField& v, const EllipticOperator& op) {
  return v.values.dot(op.trap_weight.cast<cplx>().cwiseProduct(u.values));
}

cplx boundary_inner(const SpectralField& u, const SpectralField& v, const EllipticOperator& op, Component comp,
                    bool kappa) {
  const int n = op.nt();
  const RVec w = kappa ? RVec(op.omega.segment(comp == Component::bottom ? 0 : n, n))
                       : RVec::Constant(n, op.grid().tangential_cell());
  cplx acc = 0.0;
  for (int i = 0; i < n; ++i) acc += w(i) * u.values(i) * std::conj(v.values(i));
  return acc;
}

double greens_identity_residual(const SpectralField& u, const SpectralField& v, const EllipticOperator& op,
                                const GreenOptions& opt) {
  const SpectralField au = op.apply(u, false);
  const SpectralField av = op.apply(v, true);
  cplx lhs = volume_inner(au, v, op) - volume_inner(u, av, op);
  cplx rhs = 0.0;
  for (Component c : {Component::bottom, Component::top}) {
    const SpectralField chi_u = conormal_trace(u, op, c, false);
    const SpectralField chi_v = conormal_trace(v, op, c, true);
    const SpectralField g0u = grid::trace_gamma0(u, c), g0v = grid::trace_gamma0(v, c);
    rhs += boundary_inner(chi_u, g0v, op, c, opt.kappa) - boundary_inner(g0u, chi_v, op, c, opt.kappa);
  }
  return std::abs(lhs - rhs);
}

SpectralField trace_right_inverse(const SpectralField& phi_chi, const SpectralField& phi_0, const EllipticOperator& op,
                                  Component comp) {
  if (phi_chi.location != grid::Location::boundary || phi_0.location != grid::Location::boundary)
    throw ArgumentError("trace_right_inverse: boundary data expected");
  const GridSpec& gs = op.grid();
  const int n = gs.tangential_size(), nl = gs.layers();
  const bool bottom = comp == Component::bottom;
  // lift from the chosen component: the bottom lift, mirrored in x_n for the top
  auto lift = [&](const SpectralField& g) {
    SpectralField l = grid::lift_semigroup(g);
    if (bottom) return l;
    SpectralField m = SpectralField::interior(gs);
    for (int j = 0; j < nl; ++j) m.values.segment(j * n, n) = l.values.segment((nl - 1 - j) * n, n);
    return m;
  };
  const SpectralField k0 = lift(phi_0);
  const SpectralField chi_k0 = conormal_trace(k0, op, comp);
  const GreenData& gd = op.green[bottom ? 0 : 1];
  const int jb = bottom ? 0 : nl - 1;
  SpectralField g = SpectralField::boundary(gs);
  for (int i = 0; i < n; ++i) {
    const double kap = op.geo.kappa(comp).values(i).real();
    const cplx s1 = gd.s0(i) * kap / op.geo.diffeo.nodes.fn(jb, i);
    if (std::abs(s1) < 1e-12) throw ModelError("trace_right_inverse: s1 is not invertible");
    g.values(i) = (phi_chi.values(i) - chi_k0.values(i)) / s1;
  }
  SpectralField k1 = lift(g);
  for (int j = 0; j < nl; ++j) {
    const double d = bottom ? gs.x_normal(j) : gs.normal_extent - gs.x_normal(j);
    k1.values.segment(j * n, n) *= d;
  }
  SpectralField out = k0;
  out.values += k1.values;
  return out;
}

}  // namespace kreinlab::ell
