// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/dtn_krein.hpp"

#include "kreinlab/errors.hpp"
#include "kreinlab/extension_core.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace kreinlab::dtn {

using ell::EllipticOperator;
using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

namespace {

int comp_offset(const EllipticOperator& op, Component c) { return c == Component::bottom ? 0 : op.nt(); }

int interior_layers(const EllipticOperator& op) { return op.grid().points_normal - 1; }

RVec interior_weights(const EllipticOperator& op) {
  return op.node_weight.segment(op.nt(), op.nt() * interior_layers(op));
}

double trap_norm(const EllipticOperator& op, const CVec& u) {
  return std::sqrt((op.trap_weight.array() * u.cwiseAbs2().array()).sum());
}

CVec boundary_of(const EllipticOperator& op, const CVec& u) {
  const int n = op.nt();
  CVec g(2 * n);
  g << u.head(n), u.tail(n);
  return g;
}

CMat boundary_rows(const EllipticOperator& op, const CMat& u) {
  const int n = op.nt();
  CMat g(2 * n, u.cols());
  g << u.topRows(n), u.bottomRows(n);
  return g;
}

bool constant_on(const RVec& v) { return (v.maxCoeff() - v.minCoeff()) <= 1e-14 * std::max(1.0, v.cwiseAbs().maxCoeff()); }

// Tridiagonal solve; sub(j) = A(j, j-1), sup(j) = A(j, j+1). Several right-hand sides as columns.
CMat tridiag_solve(const CVec& sub, CVec diag, const CVec& sup, CMat rhs) {
  const Eigen::Index m = diag.size();
  for (Eigen::Index j = 1; j < m; ++j) {
    const cplx f = sub(j) / diag(j - 1);
    diag(j) -= f * sup(j - 1);
    rhs.row(j) -= f * rhs.row(j - 1);
  }
  CMat x(m, rhs.cols());
  x.row(m - 1) = rhs.row(m - 1) / diag(m - 1);
  for (Eigen::Index j = m - 2; j >= 0; --j) x.row(j) = (rhs.row(j) - sup(j) * x.row(j + 1)) / diag(j);
  return x;
}

CVec wavenumbers_of(const EllipticOperator& op) {
  const auto k = grid::wavenumbers(op.nt(), op.grid().periods[0]);
  CVec out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) out(static_cast<Eigen::Index>(i)) = k[i];
  return out;
}

// Per-mode DtN for tangentially constant forms with constant Omega on each component.
CMat modal_dtn(const EllipticOperator& op, cplx lambda, bool primed) {
  const bt::BlockTridiag& k = primed ? op.form_adjoint : op.form;
  const int n = op.nt(), nn = op.grid().points_normal, m = nn - 1;
  const double ob = op.omega(0), ot = op.omega(n);
  CVec sbb(n), sbt(n), stb(n), stt(n);
  CVec sub(m), diag(m), sup(m);
  for (int q = 0; q < n; ++q) {
    for (int j = 1; j <= m; ++j) {
      diag(j - 1) = k.mdiag[j](q) - lambda * op.node_weight(j * n);
      sub(j - 1) = k.mlower[j - 1](q);
      sup(j - 1) = k.mupper[j](q);
    }
    CMat rhs = CMat::Zero(m, 2);
    rhs(0, 0) = -k.mlower[0](q);
    rhs(m - 1, 1) = -k.mupper[nn - 1](q);
    const CMat x = tridiag_solve(sub, diag, sup, rhs);
    // (K u)_0 and (K u)_N for bottom data (column 0) and top data (column 1)
    sbb(q) = -(k.mdiag[0](q) + k.mupper[0](q) * x(0, 0)) / ob;
    sbt(q) = -(k.mupper[0](q) * x(0, 1)) / ob;
    stb(q) = -(k.mlower[nn - 1](q) * x(m - 1, 0)) / ot;
    stt(q) = -(k.mlower[nn - 1](q) * x(m - 1, 1) + k.mdiag[nn](q)) / ot;
  }
  CMat p(2 * n, 2 * n);
  p.topLeftCorner(n, n) = bt::circulant(sbb);
  p.topRightCorner(n, n) = bt::circulant(sbt);
  p.bottomLeftCorner(n, n) = bt::circulant(stb);
  p.bottomRightCorner(n, n) = bt::circulant(stt);
  return p;
}

// Decaying root, or the double root 1 of the zero mode at lambda = 0.
cplx smaller_root(cplx a2, cplx a1, cplx a0) {
  try {
    return dir::decaying_root(a2, a1, a0);
  } catch (const ModelError&) {
    const cplx disc = std::sqrt(a1 * a1 - 4.0 * a2 * a0);
    const cplx r1 = (-a1 + disc) / (2.0 * a2), r2 = (-a1 - disc) / (2.0 * a2);
    const cplx r = std::abs(r1) < std::abs(r2) ? r1 : r2;
    if (std::abs(r) > 1.0 + 1e-8) throw;
    return r;
  }
}

}  // namespace

// --- Dirichlet-to-Neumann -------------------------------------------------------

CMat DtNHandle::block(Component to, Component from) const {
  const int n = nt();
  return matrix.block(to == Component::bottom ? 0 : n, from == Component::bottom ? 0 : n, n, n);
}

CVec DtNHandle::block_symbol(Component to, Component from) const {
  const CMat b = block(to, from);
  const int n = nt();
  CVec s(n);
  for (int q = 0; q < n; ++q) s(q) = bt::to_modes(b * bt::from_modes(CVec(CVec::Unit(n, q))))(q);
  return s;
}

DtNHandle dtn_assemble(OperatorPtr op, cplx lambda, bool primed) {
  if (op->grid().points_normal < 2) throw ArgumentError("dtn_assemble: at least two normal cells required");
  const int n = op->nt();
  // the factorization also guards against spectrum hits
  const dir::ResolventHandle r(op, primed ? std::conj(lambda) : lambda);
  DtNHandle h;
  h.lambda = lambda;
  h.primed = primed;
  h.op = op;
  const bool modal = op->form.modal && op->form_adjoint.modal && constant_on(op->omega.head(n)) &&
                     constant_on(op->omega.tail(n));
  if (modal) {
    h.matrix = modal_dtn(*op, lambda, primed);
  } else {
    const CMat id = CMat::Identity(2 * n, 2 * n);
    const CMat u = primed ? r.poisson_adjoint(id) : r.poisson(id);
    const CMat ku = boundary_rows(*op, primed ? op->form_adjoint.apply(u) : op->form.apply(u));
    h.matrix = -(op->omega.cwiseInverse().cast<cplx>().asDiagonal() * ku);
  }
  return h;
}

DtNHandle dtn_assemble(const EllipticOperator& op, cplx lambda, bool primed) {
  return dtn_assemble(std::make_shared<const EllipticOperator>(op), lambda, primed);
}

double dtn_adjoint_defect(const DtNHandle& p, const DtNHandle& pp) {
  if (p.primed || !pp.primed) throw ArgumentError("dtn_adjoint_defect: expects (P, P')");
  if (std::abs(pp.lambda - std::conj(p.lambda)) > 1e-14 * (1.0 + std::abs(p.lambda)))
    throw ArgumentError("dtn_adjoint_defect: P' must be taken at conj(lambda)");
  const auto om = p.op->omega.cast<cplx>().asDiagonal();
  const CMat a = om * p.matrix, b = om * pp.matrix;
  return (a - b.adjoint()).norm() / std::max(a.norm(), 1e-300);
}

CMat frozen_dtn_symbol(const EllipticOperator& op, Component c, cplx lambda) {
  const GridSpec& gs = op.grid();
  const int n = gs.tangential_size(), nl = gs.layers(), nn = gs.points_normal;
  if (nn < 4) throw ArgumentError("frozen_dtn_symbol: at least four normal cells required");
  ell::CoefficientField principal = op.coeff;
  principal.a = [](double, double) { return ell::Vec2{0.0, 0.0}; };
  principal.a0 = [](double, double) { return cplx(0.0); };
  const ell::ReferenceCoefficients rc = ell::reference_coefficients(principal, op.geo);
  const bool bottom = c == Component::bottom;
  const int jb = bottom ? 0 : nn, jm = nn / 2;
  const double h = gs.h_normal(), hp = gs.tangential_cell();
  CMat out(n, n);
  for (int i = 0; i < n; ++i) {
    ell::ReferenceCoefficients fr;
    const int node = jb * n + i;
    for (int q = 0; q < 4; ++q) fr.bf[q] = CVec::Constant(n * nl, rc.bf[q](node));
    for (auto& b : fr.beta) b = CVec::Zero(n * nl);
    fr.mass = CVec::Zero(n * nl);
    fr.tangentially_constant = true;
    const bt::BlockTridiag k = ell::assemble_form(fr, gs);
    const double w = hp * h * op.geo.diffeo.nodes.fn(jb, i);
    const double om = op.omega(comp_offset(op, c) + i);
    for (int m = 0; m < n; ++m) {
      const cplx lo = k.mlower[jm - 1](m), dg = k.mdiag[jm](m) - lambda * w, up = k.mupper[jm](m);
      if (bottom) {
        const cplx r = smaller_root(up, dg, lo);
        out(i, m) = -(k.mdiag[0](m) + k.mupper[0](m) * r) / om;
      } else {
        const cplx r = smaller_root(lo, dg, up);
        out(i, m) = -(k.mdiag[nn](m) + k.mlower[nn - 1](m) * r) / om;
      }
    }
  }
  return out;
}

SharpReport dtn_sharp_approx(const DtNHandle& p, double delta, Component c, double epsilon) {
  if (p.primed) throw ArgumentError("dtn_sharp_approx: expects an unprimed DtN");
  const EllipticOperator& op = *p.op;
  const GridSpec& gs = op.grid();
  const int n = op.nt();
  psdo::SymbolField sym;
  sym.shape = {n};
  sym.periods = {gs.periods[0]};
  sym.values = frozen_dtn_symbol(op, c, p.lambda);
  sym.order = 1.0;
  sym.kind = psdo::SymbolKind::boundary;
  const psdo::SmoothedSymbol sm = psdo::symbol_smooth(sym, delta);

  GridSpec bg = gs;
  auto apply_symbol = [&](const psdo::SymbolField& s, const CVec& phi) {
    psdo::ChartPiece piece;
    piece.psi = RVec::Ones(n);
    piece.phi = RVec::Ones(n);
    piece.p = s;
    piece.component = c;
    SpectralField f = SpectralField::boundary(bg);
    f.values = phi;
    return psdo::chart_boundary_psdo({piece}, f).values;
  };
  const CMat pc = p.block(c, c);
  auto remainder = [&](const CVec& phi) -> CVec { return pc * phi - apply_symbol(sm.sharp, phi); };

  SharpReport rep;
  rep.epsilon = epsilon;
  const RVec w = op.omega.segment(comp_offset(op, c), n);
  // the top octave is left out: products with rough coefficients alias there
  int j_hi = 1;
  while ((2 << j_hi) <= n / 4) ++j_hi;
  if (j_hi < 3) throw ArgumentError("dtn_sharp_approx: at least 32 tangential nodes required");
  rep.fit = psdo::fit_band_order(remainder, {n}, {gs.periods[0]}, 1, j_hi, w);

  std::mt19937_64 rng(5);
  const CVec phi = la::random_complex(n, 1, rng).col(0);
  const CVec a = apply_symbol(sm.sharp, phi), b = apply_symbol(sym, phi);
  rep.smoothing_change = (a - b).norm() / std::max(b.norm(), 1e-300);
  rep.pass = rep.fit.order <= 1.0 - epsilon;
  return rep;
}

// --- reduced traces ---------------------------------------------------------------

CVec conormal_of(const EllipticOperator& op, const CVec& u, TraceChoice t, bool primed) {
  if (t == TraceChoice::flux) return op.flux_conormal(u, primed);
  const int n = op.nt(), nl = op.layers();
  SpectralField f = SpectralField::interior(op.grid());
  f.values = u;
  CVec out(2 * n);
  for (Component c : {Component::bottom, Component::top})
    out.segment(comp_offset(op, c), n) = ell::conormal_trace(f, op, c, primed).values;
  if (t == TraceChoice::conormal) return out;
  // drop the tangential part: conormal of the field that is constant in x_n near each side
  SpectralField e = SpectralField::interior(op.grid());
  for (int j = 0; j < nl; ++j) e.values.segment(j * n, n) = 2 * j < nl ? u.head(n) : u.tail(n);
  CVec tang(2 * n);
  for (Component c : {Component::bottom, Component::top})
    tang.segment(comp_offset(op, c), n) = ell::conormal_trace(e, op, c, primed).values;
  return out - tang;
}

CVec reduced_trace(const dir::ResolventHandle& r, const CVec& u, TraceChoice t) {
  const EllipticOperator& op = r.op();
  const CVec w = u - r.poisson(boundary_of(op, u));
  CVec g = conormal_of(op, w, t);
#ifndef NDEBUG
  if (t == TraceChoice::flux) {
    const CVec alt = reduced_trace_via_resolvent(r, u);
    if ((alt - g).norm() > 1e-8 * std::max(1.0, g.norm()))
      throw std::logic_error("reduced_trace: resolvent identity violated");
  }
#endif
  return g;
}

CVec reduced_trace_via_resolvent(const dir::ResolventHandle& r, const CVec& u) {
  const EllipticOperator& op = r.op();
  const int n = op.nt(), ni = r.interior_size();
  const CVec ku = op.form.apply(u);
  SpectralField f = SpectralField::interior(op.grid());
  f.values.segment(n, ni) =
      ku.segment(n, ni).cwiseQuotient(interior_weights(op).cast<cplx>()) - r.lambda() * u.segment(n, ni);
  return op.flux_conormal(r.solve(f).values);
}

double modified_green_residual(const EllipticOperator& op, const SpectralField& u, const SpectralField& v,
                               const ell::GreenOptions& opt) {
  auto sp = std::make_shared<const EllipticOperator>(op);
  const dir::ResolventHandle r0(sp, 0.0);
  SpectralField wu = u, wv = v;
  wu.values -= r0.poisson(boundary_of(op, u.values));
  wv.values -= r0.poisson_adjoint(CMat(boundary_of(op, v.values))).col(0);
  const SpectralField au = op.apply(u, false), av = op.apply(v, true);
  const cplx lhs = ell::volume_inner(au, v, op) - ell::volume_inner(u, av, op);
  cplx rhs = 0.0;
  for (Component c : {Component::bottom, Component::top}) {
    const SpectralField gu = ell::conormal_trace(wu, op, c, false);
    const SpectralField gv = ell::conormal_trace(wv, op, c, true);
    rhs += ell::boundary_inner(gu, grid::trace_gamma0(v, c), op, c, opt.kappa) -
           ell::boundary_inner(grid::trace_gamma0(u, c), gv, op, c, opt.kappa);
  }
  return std::abs(lhs - rhs);
}

// --- boundary operators and realizations -------------------------------------------

double BoundaryOperator::declared_order() const {
  switch (kind) {
    case BoundaryKind::multiplier:
      return 0.0;
    case BoundaryKind::tangential_derivative:
      return slope == cplx(0.0) ? 0.0 : 1.0;
    case BoundaryKind::psdo_symbol:
      return order;
    case BoundaryKind::dtn:
      return 1.0;
  }
  return 0.0;
}

cplx BoundaryOperator::principal_symbol(double xi) const {
  switch (kind) {
    case BoundaryKind::tangential_derivative:
      return kI * slope * xi;
    case BoundaryKind::psdo_symbol:
      return order == 1.0 ? value * std::abs(xi) : cplx(0.0);
    default:
      return 0.0;
  }
}

BoundaryOperator BoundaryOperator::multiplier(cplx c) {
  BoundaryOperator b;
  b.value = c;
  return b;
}

RealizationSpec RealizationSpec::neumann(const BoundaryOperator& c, ComponentSelection sel) {
  RealizationSpec s;
  s.c = c;
  s.component = sel;
  return s;
}

RealizationSpec RealizationSpec::subspace(CMat x, CMat y, CMat l) {
  RealizationSpec s;
  s.mode = RealizationMode::subspace;
  s.x = std::move(x);
  s.y = std::move(y);
  s.l = std::move(l);
  return s;
}

RealizationSpec RealizationSpec::dirichlet() {
  RealizationSpec s;
  s.mode = RealizationMode::subspace;
  return s;
}

namespace {

cplx json_complex(const nlohmann::json& j, const std::string& ptr) {
  if (j.is_number()) return j.get<double>();
  if (j.is_object() && j.contains("re")) {
    if (!j["re"].is_number() || (j.contains("im") && !j["im"].is_number()))
      throw UsageError("complex value needs numeric re, im", ptr);
    return {j["re"].get<double>(), j.value("im", 0.0)};
  }
  throw UsageError("expected a number or {re, im}", ptr);
}

double json_number(const nlohmann::json& obj, const char* key, double def, const std::string& ptr) {
  if (!obj.contains(key)) return def;
  if (!obj[key].is_number()) throw UsageError("expected a number", ptr + "/" + key);
  return obj[key].get<double>();
}

}  // namespace

RealizationSpec RealizationSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("realization: ") + e.what(), "");
  }
  if (!j.is_object()) throw UsageError("realization must be an object", "/");
  RealizationSpec s;
  const std::string mode = j.value("mode", std::string("neumann_type"));
  const std::string comp = j.value("component", std::string("both"));
  if (comp == "both") s.component = ComponentSelection::both;
  else if (comp == "bottom") s.component = ComponentSelection::bottom;
  else if (comp == "top") s.component = ComponentSelection::top;
  else throw UsageError("unknown component '" + comp + "'", "/component");
  if (j.contains("C")) {
    const auto& c = j["C"];
    if (!c.is_object()) throw UsageError("expected an object", "/C");
    const std::string kind = c.value("kind", std::string("multiplier"));
    if (kind == "multiplier") s.c.kind = BoundaryKind::multiplier;
    else if (kind == "tangential_derivative") s.c.kind = BoundaryKind::tangential_derivative;
    else if (kind == "psdo_symbol") s.c.kind = BoundaryKind::psdo_symbol;
    else if (kind == "dtn") s.c.kind = BoundaryKind::dtn;
    else throw UsageError("unknown boundary operator kind '" + kind + "'", "/C/kind");
    const nlohmann::json params = c.value("params", nlohmann::json::object());
    if (!params.is_object()) throw UsageError("expected an object", "/C/params");
    if (params.contains("value")) s.c.value = json_complex(params["value"], "/C/params/value");
    if (params.contains("slope")) s.c.slope = json_complex(params["slope"], "/C/params/slope");
    s.c.amplitude = json_number(params, "amplitude", 0.0, "/C/params");
    s.c.exponent = json_number(params, "exponent", 1.0, "/C/params");
    s.c.shift = json_number(params, "shift", 0.0, "/C/params");
    s.c.order = json_number(params, "order", 1.0, "/C/params");
    if (s.c.declared_order() > 1.0) throw UsageError("boundary operator order above one", "/C/params/order");
  }
  if (mode == "neumann_type") {
    s.mode = RealizationMode::neumann_type;
  } else if (mode == "subspace") {
    s.mode = RealizationMode::subspace;
    const std::string basis = j.value("basis", std::string("full"));
    if (basis == "full") s.l_from_c = true;
    else if (basis != "none") throw UsageError("basis must be 'full' or 'none'", "/basis");
  } else {
    throw UsageError("unknown mode '" + mode + "'", "/mode");
  }
  return s;
}

namespace {

CMat component_matrix(const EllipticOperator& op, const BoundaryOperator& b) {
  const int n = op.nt();
  const double period = op.grid().periods[0];
  const auto ax = op.grid().tangential_axis(0);
  CVec mult(n);
  for (int i = 0; i < n; ++i)
    mult(i) = b.value + b.amplitude * std::pow(std::abs(std::sin(ax[i] - b.shift)), b.exponent);
  switch (b.kind) {
    case BoundaryKind::multiplier:
      return mult.asDiagonal();
    case BoundaryKind::tangential_derivative: {
      CMat d = b.slope * grid::derivative_matrix(n, period).cast<cplx>();
      d.diagonal() += mult;
      return d;
    }
    case BoundaryKind::psdo_symbol: {
      const CVec k = wavenumbers_of(op);
      CVec s(n);
      for (int q = 0; q < n; ++q) s(q) = b.value * std::pow(1.0 + std::norm(k(q)), 0.5 * b.order);
      return bt::circulant(s);
    }
    case BoundaryKind::dtn:
      break;
  }
  throw ArgumentError("component_matrix: dtn kind has no per-component matrix");
}

// Omega-orthonormal selection basis Omega^{-1/2} E.
CMat selection_basis(const EllipticOperator& op, bool bottom, bool top) {
  const int n = op.nt();
  const int d = (bottom ? n : 0) + (top ? n : 0);
  CMat x = CMat::Zero(2 * n, d);
  int col = 0;
  for (int c = 0; c < 2; ++c) {
    if ((c == 0 && !bottom) || (c == 1 && !top)) continue;
    for (int i = 0; i < n; ++i) x(c * n + i, col++) = 1.0 / std::sqrt(op.omega(c * n + i));
  }
  return x;
}

double orthonormality_defect(const EllipticOperator& op, const CMat& x) {
  if (x.cols() == 0) return 0.0;
  const CMat g = x.adjoint() * op.omega.cast<cplx>().asDiagonal() * x;
  return (g - CMat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

Realization::Realization(OperatorPtr op, RealizationSpec spec) : op_(std::move(op)), spec_(std::move(spec)) {
  const EllipticOperator& o = *op_;
  const int n = o.nt();
  if (o.grid().points_normal < 4) throw ArgumentError("Realization: at least four normal cells required");
  if (spec_.c.declared_order() > 1.0) throw ArgumentError("Realization: boundary operator order above one");
  const bool use_c = spec_.mode == RealizationMode::neumann_type || spec_.l_from_c;
  if (use_c) {
    c_ = CMat::Zero(2 * n, 2 * n);
    const bool b = selected(Component::bottom), t = selected(Component::top);
    if (spec_.c.kind == BoundaryKind::dtn) {
      const CMat p0 = dtn_assemble(op_, 0.0).matrix;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
          if ((r == 0 ? b : t) && (c == 0 ? b : t)) c_.block(r * n, c * n, n, n) = p0.block(r * n, c * n, n, n);
    } else {
      const CMat cm = component_matrix(o, spec_.c);
      if (b) c_.topLeftCorner(n, n) = cm;
      if (t) c_.bottomRightCorner(n, n) = cm;
    }
    x_ = selection_basis(o, b, t);
    y_ = x_;
  } else {
    x_ = spec_.x.size() ? spec_.x : CMat(2 * n, 0);
    y_ = spec_.y.size() ? spec_.y : CMat(2 * n, 0);
    l_ = spec_.l.size() ? spec_.l : CMat(y_.cols(), x_.cols());
    if (x_.rows() != 2 * n || y_.rows() != 2 * n) throw ArgumentError("Realization: bases need 2 nt rows");
    if (x_.cols() != y_.cols()) throw ArgumentError("Realization: dim X must equal dim Y");
    if (l_.rows() != y_.cols() || l_.cols() != x_.cols()) throw ArgumentError("Realization: L has the wrong shape");
    if (orthonormality_defect(o, x_) > 1e-8 || orthonormality_defect(o, y_) > 1e-8)
      throw ModelError("Realization: degenerate boundary rows (X, Y not Omega-orthonormal)");
  }
  if (spec_.mode == RealizationMode::subspace) {
    if (x_.cols() > 0) p0_ = dtn_assemble(op_, 0.0).matrix;
    if (spec_.l_from_c) l_ = l_matrix();
    l_ready_ = true;
  }
}

bool Realization::selected(Component c) const {
  if (spec_.component == ComponentSelection::both) return true;
  return (spec_.component == ComponentSelection::bottom) == (c == Component::bottom);
}

CMat Realization::l_matrix() const {
  if (l_ready_) return l_;
  const CMat p0 = p0_.size() ? p0_ : dtn_assemble(op_, 0.0).matrix;
  return y_.adjoint() * op_->omega.cast<cplx>().asDiagonal() * (c_ - p0) * x_;
}

CMat Realization::l_lambda(const DtNHandle& p) const {
  const auto om = op_->omega.cast<cplx>().asDiagonal();
  if (spec_.mode == RealizationMode::neumann_type) return y_.adjoint() * om * (c_ - p.matrix) * x_;
  if (x_.cols() == 0) return CMat(0, 0);
  return l_ + y_.adjoint() * om * (p0_ - p.matrix) * x_;
}

namespace {

// Neumann-type realization matrix minus any coupling between the components, plus the
// Woodbury factors for that coupling.
struct NeumannSystem {
  std::unique_ptr<bt::BlockLU> lu;
  CMat u_cross;  // n_all x 2 nt; multiplies [u_top; u_bottom]
  bool cross = false;
};

NeumannSystem neumann_system(const EllipticOperator& op, const CMat& c, bool bottom, bool top, cplx lambda) {
  const int n = op.nt(), nl = op.layers(), nn = op.grid().points_normal;
  const CMat cbb = c.topLeftCorner(n, n), ctt = c.bottomRightCorner(n, n);
  bool modal = op.form.modal && constant_on(op.omega.head(n)) && constant_on(op.omega.tail(n));
  CVec sbb, stt;
  if (modal) {
    sbb = bt::circulant_symbol(cbb);
    stt = bt::circulant_symbol(ctt);
    modal = (bt::circulant(sbb) - cbb).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + cbb.cwiseAbs().maxCoeff()) &&
            (bt::circulant(stt) - ctt).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + ctt.cwiseAbs().maxCoeff());
  }
  RVec w = op.node_weight;
  w.head(n).setZero();
  w.tail(n).setZero();
  bt::BlockTridiag t = (modal ? op.form : op.form.densified()).shifted(lambda, w);
  const RVec ob = op.omega.head(n), ot = op.omega.tail(n);
  if (modal) {
    if (bottom) t.mdiag[0] += ob(0) * sbb;
    else {
      t.mdiag[0].setOnes();
      t.mupper[0].setZero();
    }
    if (top) t.mdiag[nn] += ot(0) * stt;
    else {
      t.mdiag[nn].setOnes();
      t.mlower[nn - 1].setZero();
    }
  } else {
    if (bottom) t.diag[0] += ob.cast<cplx>().asDiagonal() * cbb;
    else {
      t.diag[0].setIdentity();
      t.upper[0].setZero();
    }
    if (top) t.diag[nn] += ot.cast<cplx>().asDiagonal() * ctt;
    else {
      t.diag[nn].setIdentity();
      t.lower[nn - 1].setZero();
    }
  }
  NeumannSystem s;
  s.lu = std::make_unique<bt::BlockLU>(t);
  const double cond = s.lu->condition_estimate();
  if (!std::isfinite(cond) || cond > dir::kConditionLimit) {
    std::ostringstream os;
    os << "lambda = " << lambda << " is numerically an eigenvalue of the realization (condition " << cond << ")";
    throw SingularityError(os.str(), cond);
  }
  const CMat cbt = c.topRightCorner(n, n), ctb = c.bottomLeftCorner(n, n);
  if (bottom && top && (cbt.cwiseAbs().maxCoeff() > 0.0 || ctb.cwiseAbs().maxCoeff() > 0.0)) {
    s.cross = true;
    s.u_cross = CMat::Zero(n * nl, 2 * n);
    s.u_cross.block(0, 0, n, n) = ob.cast<cplx>().asDiagonal() * cbt;
    s.u_cross.block(nn * n, n, n, n) = ot.cast<cplx>().asDiagonal() * ctb;
  }
  return s;
}

CMat neumann_solve(const NeumannSystem& s, int n, const CMat& rhs) {
  CMat y = s.lu->solve(rhs);
  if (!s.cross) return y;
  auto pick = [n](const CMat& v) {
    CMat out(2 * n, v.cols());
    out << v.bottomRows(n), v.topRows(n);
    return out;
  };
  const CMat z = s.lu->solve(s.u_cross);
  const CMat cap = CMat::Identity(2 * n, 2 * n) + pick(z);
  return y - z * cap.partialPivLu().solve(pick(y));
}

}  // namespace

CMat Realization::direct_solve(cplx lambda, const CMat& f, const CMat& eta) const {
  const EllipticOperator& o = *op_;
  const int n = o.nt(), na = o.grid().interior_size(), ni = n * interior_layers(o), d = static_cast<int>(x_.cols());
  if (f.rows() != na) throw ArgumentError("direct_solve: full grid vectors expected");
  if (eta.size() && (eta.rows() != d || eta.cols() != f.cols())) throw ArgumentError("direct_solve: eta shape");
  const CMat wf = interior_weights(o).cast<cplx>().asDiagonal() * f.middleRows(n, ni);

  if (spec_.mode == RealizationMode::neumann_type) {
    const NeumannSystem s = neumann_system(o, c_, selected(Component::bottom), selected(Component::top), lambda);
    CMat rhs = CMat::Zero(na, f.cols());
    rhs.middleRows(n, ni) = wf;
    if (eta.size()) {
      // boundary rows: (K u)_B + Omega C u_B = -Omega^{1/2} E eta
      const CMat g = -(o.omega.cast<cplx>().asDiagonal() * x_ * eta);
      rhs.topRows(n) = g.topRows(n);
      rhs.bottomRows(n) = g.bottomRows(n);
    }
    return neumann_solve(s, n, rhs);
  }

  // subspace mode: one dense system in (u_I, a)
  if (ni + d > 4000) throw ArgumentError("direct_solve: subspace realizations are limited to small grids");
  const CMat kd = o.form.to_dense();
  std::vector<int> bidx = o.boundary_indices();
  CMat kbi(2 * n, ni), kib(ni, 2 * n), kbb(2 * n, 2 * n);
  for (int r = 0; r < 2 * n; ++r) {
    kbi.row(r) = kd.row(bidx[r]).segment(n, ni);
    kib.col(r) = kd.col(bidx[r]).segment(n, ni);
    for (int c = 0; c < 2 * n; ++c) kbb(r, c) = kd(bidx[r], bidx[c]);
  }
  CMat sys(ni + d, ni + d);
  sys.topLeftCorner(ni, ni) = kd.block(n, n, ni, ni);
  sys.topLeftCorner(ni, ni).diagonal() -= lambda * interior_weights(o).cast<cplx>();
  const auto om = o.omega.cast<cplx>().asDiagonal();
  if (d > 0) {
    const CMat& p0 = p0_;
    sys.topRightCorner(ni, d) = kib * x_;
    sys.bottomLeftCorner(d, ni) = -(y_.adjoint() * kbi);
    sys.bottomRightCorner(d, d) = -(y_.adjoint() * kbb * x_ + y_.adjoint() * om * p0 * x_ + l_);
  }
  CMat rhs = CMat::Zero(ni + d, f.cols());
  rhs.topRows(ni) = wf;
  if (eta.size()) rhs.bottomRows(d) = eta;
  const Eigen::PartialPivLU<CMat> lu(sys);
  const double rc = lu.rcond();
  if (!(rc > 1.0 / dir::kConditionLimit))
    throw SingularityError("lambda is numerically an eigenvalue of the realization", 1.0 / rc);
  const CMat sol = lu.solve(rhs);
  CMat u = CMat::Zero(na, f.cols());
  u.middleRows(n, ni) = sol.topRows(ni);
  if (d > 0) {
    const CMat g = x_ * sol.bottomRows(d);
    u.topRows(n) = g.topRows(n);
    u.bottomRows(n) = g.bottomRows(n);
  }
  return u;
}

SpectralField Realization::direct_solve(cplx lambda, const SpectralField& f) const {
  if (!(f.grid == op_->grid()) || f.location != grid::Location::interior)
    throw ArgumentError("direct_solve: interior field on the operator grid expected");
  SpectralField u = SpectralField::interior(op_->grid());
  u.values = direct_solve(lambda, CMat(f.values), CMat()).col(0);
  return u;
}

LinearMapHandle realization_assemble(const Realization& r) {
  auto op = r.op_ptr();
  const int n = op->nt(), ni = n * interior_layers(*op);
  LinearMapHandle h;
  h.grid = op->grid();
  const CMat c = r.c_matrix(), x = r.x_basis(), y = r.y_basis();
  const bool neumann = r.neumann_type();
  const bool sel_b = r.selected(Component::bottom), sel_t = r.selected(Component::top);
  CMat p0, l, xc;
  if (!neumann) {
    l = r.l_matrix();
    p0 = r.p0();
    // Omega-orthonormal complement of X
    const RVec sq = op->omega.cwiseSqrt();
    const CMat q = sq.cast<cplx>().asDiagonal() * x;
    xc = sq.cwiseInverse().cast<cplx>().asDiagonal() * la::complement(q, 2 * n);
  }
  h.fn = [op, n, ni, c, x, y, l, p0, xc, neumann, sel_b, sel_t](const CVec& u) {
    const CVec ku = op->form.apply(u);
    CVec out = CVec::Zero(u.size());
    out.segment(n, ni) = ku.segment(n, ni).cwiseQuotient(interior_weights(*op).cast<cplx>());
    const CVec g = boundary_of(*op, u);
    const CVec chi = op->flux_conormal(u);
    CVec b(2 * n);
    if (neumann) {
      b = chi - c * g;
      if (!sel_b) b.head(n) = g.head(n);
      if (!sel_t) b.tail(n) = g.tail(n);
    } else {
      const auto om = op->omega.cast<cplx>().asDiagonal();
      const Eigen::Index d = x.cols();
      if (d > 0) b.head(d) = y.adjoint() * om * (chi - p0 * g) - l * (x.adjoint() * om * g);
      b.tail(2 * n - d) = xc.adjoint() * om * g;
    }
    out.head(n) = b.head(n);
    out.tail(n) = b.tail(n);
    return out;
  };
  return h;
}

LinearMapHandle realization_assemble(OperatorPtr op, const RealizationSpec& spec) {
  return realization_assemble(Realization(std::move(op), spec));
}

// --- Krein route ---------------------------------------------------------------------

namespace {

struct LambdaSolve {
  CMat l;
  double smallest = 0.0, largest = 0.0;
  bool eigenvalue = false;
};

LambdaSolve l_lambda_of(const Realization& r, const DtNHandle& p) {
  LambdaSolve s;
  s.l = r.l_lambda(p);
  if (s.l.size() == 0) return s;
  Eigen::BDCSVD<CMat> svd(s.l);
  const RVec sv = svd.singularValues();
  s.largest = sv(0);
  s.smallest = sv(sv.size() - 1);
  s.eigenvalue = s.smallest <= kEigenvalueThreshold * std::max(s.largest, 1e-300);
  return s;
}

}  // namespace

SolveResult krein_solve(const Realization& r, cplx lambda, const SpectralField& f) {
  const EllipticOperator& op = r.op();
  if (!(f.grid == op.grid()) || f.location != grid::Location::interior)
    throw ArgumentError("krein_solve: interior field on the operator grid expected");
  const dir::ResolventHandle res(r.op_ptr(), lambda);
  const DtNHandle p = dtn_assemble(r.op_ptr(), lambda);
  const LambdaSolve ls = l_lambda_of(r, p);
  SolveResult out{SpectralField::interior(op.grid()), SpectralField::interior(op.grid()), {}};
  out.report.lambda = lambda;
  out.report.smallest_singular = ls.smallest;
  out.report.m_condition = ls.l.size() ? ls.largest / std::max(ls.smallest, 1e-300) : 1.0;
  if (ls.eigenvalue) {
    out.report.eigenvalue = true;
    out.report.discrepancy = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const SpectralField ug = res.solve(f);
  out.u_krein = ug;
  if (ls.l.size()) {
    const CVec psi = op.flux_conormal(ug.values);
    const CVec rhs = r.y_basis().adjoint() * (op.omega.cast<cplx>().asDiagonal() * psi);
    const CVec rho = ls.l.partialPivLu().solve(rhs);
    out.u_krein.values += res.poisson(CVec(r.x_basis() * rho));
  }
  out.u_direct = r.direct_solve(lambda, f);
  const double nd = trap_norm(op, out.u_direct.values);
  out.report.discrepancy = trap_norm(op, out.u_direct.values - out.u_krein.values) / std::max(nd, 1e-300);
  out.report.h2_ratio = h2_norm(op, out.u_direct.values) / std::max(trap_norm(op, f.values), 1e-300);
  return out;
}

MFunctionReport m_function_pde(const Realization& r, cplx lambda) {
  const EllipticOperator& op = r.op();
  const DtNHandle p = dtn_assemble(r.op_ptr(), lambda);
  const LambdaSolve ls = l_lambda_of(r, p);
  MFunctionReport rep;
  rep.smallest_singular = ls.smallest;
  const Eigen::Index d = ls.l.rows();
  if (ls.eigenvalue) {
    rep.eigenvalue = true;
    rep.route_discrepancy = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  if (d == 0) return rep;
  rep.m = -ls.l.partialPivLu().solve(CMat(CMat::Identity(d, d)));
  const CMat u = r.direct_solve(lambda, CMat::Zero(op.grid().interior_size(), d), CMat::Identity(d, d));
  const CMat a = r.x_basis().adjoint() * op.omega.cast<cplx>().asDiagonal() * boundary_rows(op, u);
  rep.route_discrepancy = (a - rep.m).norm() / std::max(rep.m.norm(), 1e-300);
  return rep;
}

// --- the G-link -----------------------------------------------------------------------

GLinkReport g_link_check(OperatorPtr op, cplx lambda) {
  const EllipticOperator& o = *op;
  const int n = o.nt(), ni = n * interior_layers(o);
  if (ni > 1500) throw ArgumentError("g_link_check: dense construction limited to small grids");
  const CMat kd = o.form.to_dense();
  const std::vector<int> bidx = o.boundary_indices();
  CMat kbi(2 * n, ni), kib(ni, 2 * n);
  for (int r = 0; r < 2 * n; ++r) {
    kbi.row(r) = kd.row(bidx[r]).segment(n, ni);
    kib.col(r) = kd.col(bidx[r]).segment(n, ni);
  }
  const CMat kii = kd.block(n, n, ni, ni);
  const RVec wh = interior_weights(o).cwiseSqrt();
  const auto whd = wh.cast<cplx>().asDiagonal();
  const auto whi = wh.cwiseInverse().cast<cplx>().asDiagonal();
  const CMat ag = whi * kii * whi;

  const CMat dmin = la::null_space(kbi * whi);
  const CMat dmin_p = la::null_space(kib.adjoint() * whi);
  const ext::DualPair pair =
      ext::DualPair::make(ext::SubspaceGraph::of_restriction(ag, dmin),
                          ext::SubspaceGraph::of_restriction(ag.adjoint(), dmin_p), ext::SubspaceGraph::of_matrix(ag));
  const CMat g = ext::g_lambda(pair, pair.z, pair.z_prime, lambda);

  const CMat k0 = -(kii.partialPivLu().solve(kib));
  const CMat k0p = -(kii.adjoint().partialPivLu().solve(kbi.adjoint()));
  const CMat cz = pair.z.adjoint() * whd * k0;
  const CMat czp = pair.z_prime.adjoint() * whd * k0p;

  GLinkReport rep;
  rep.from_pair = o.omega.cwiseInverse().cast<cplx>().asDiagonal() * (czp.adjoint() * g * cz);
  rep.from_dtn = dtn_assemble(op, 0.0).matrix - dtn_assemble(op, lambda).matrix;
  rep.discrepancy = (rep.from_pair - rep.from_dtn).cwiseAbs().maxCoeff() /
                    std::max(rep.from_dtn.cwiseAbs().maxCoeff(), 1e-300);
  rep.kernel_defect = la::subspace_distance(pair.z, la::orth(CMat(whd * k0)));
  return rep;
}

// --- ellipticity and regularity ---------------------------------------------------------

EllipticityReport ellipticity_check(const EllipticOperator& op, const RealizationSpec& spec, int levels, double tol) {
  if (spec.mode != RealizationMode::neumann_type)
    throw ArgumentError("ellipticity_check: neumann-type realization expected");
  const int n = op.nt();
  const ell::ReferenceCoefficients rc = ell::reference_coefficients(op.coeff, op.geo);
  const double hp = op.grid().tangential_cell();
  const auto ax = op.grid().tangential_axis(0);
  EllipticityReport rep;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for (Component c : {Component::bottom, Component::top}) {
    if (spec.component != ComponentSelection::both &&
        (spec.component == ComponentSelection::bottom) != (c == Component::bottom))
      continue;
    const bool bottom = c == Component::bottom;
    const int jb = bottom ? 0 : op.grid().points_normal;
    for (int i = 0; i < n; ++i) {
      const int node = jb * n + i;
      const cplx btt = rc.bf[0](node), bts = rc.bf[1](node), bst = rc.bf[2](node), bss = rc.bf[3](node);
      const double kappa = op.omega(comp_offset(op, c) + i) / hp;
      for (int j = 0; j <= levels; ++j)
        for (double sgn : {1.0, -1.0}) {
          const double xi = sgn * std::ldexp(1.0, j);
          // bss r^2 + i xi (bts + bst) r - btt xi^2 = 0
          const cplx a1 = kI * xi * (bts + bst), a0 = -btt * xi * xi;
          const cplx disc = std::sqrt(a1 * a1 - 4.0 * bss * a0);
          const cplx r1 = (-a1 + disc) / (2.0 * bss), r2 = (-a1 - disc) / (2.0 * bss);
          cplx p0;
          if (bottom) {
            const cplx r = r1.real() < r2.real() ? r1 : r2;
            p0 = (kI * xi * bst + bss * r) / kappa;
          } else {
            const cplx q = r1.real() > r2.real() ? r1 : r2;
            p0 = -(kI * xi * bst + bss * q) / kappa;
          }
          const cplx c0 = spec.c.kind == BoundaryKind::dtn ? p0 : spec.c.principal_symbol(xi);
          const double ratio = std::abs(c0 - p0) / std::sqrt(1.0 + xi * xi);
          if (ratio < rep.min_ratio) {
            rep.min_ratio = ratio;
            rep.x_at_min = ax[i];
            rep.xi_at_min = xi;
            rep.component_at_min = c;
          }
        }
    }
  }
  rep.pass = rep.min_ratio > tol;
  return rep;
}

double h2_norm(const EllipticOperator& op, const CVec& u) {
  const GridSpec& gs = op.grid();
  const int n = gs.tangential_size(), nl = gs.layers(), nn = gs.points_normal;
  if (nn < 3) throw ArgumentError("h2_norm: at least three normal cells required");
  const double h = gs.h_normal(), period = gs.periods[0];
  auto layer = [&](int j) { return CVec(u.segment(j * n, n)); };
  double acc = 0.0;
  for (int j = 0; j < nl; ++j) {
    CVec us, uss;
    if (j == 0) {
      us = (-3.0 * layer(0) + 4.0 * layer(1) - layer(2)) / (2.0 * h);
      uss = (2.0 * layer(0) - 5.0 * layer(1) + 4.0 * layer(2) - layer(3)) / (h * h);
    } else if (j == nn) {
      us = (3.0 * layer(nn) - 4.0 * layer(nn - 1) + layer(nn - 2)) / (2.0 * h);
      uss = (2.0 * layer(nn) - 5.0 * layer(nn - 1) + 4.0 * layer(nn - 2) - layer(nn - 3)) / (h * h);
    } else {
      us = (layer(j + 1) - layer(j - 1)) / (2.0 * h);
      uss = (layer(j + 1) - 2.0 * layer(j) + layer(j - 1)) / (h * h);
    }
    const CVec v = layer(j);
    const CVec ut = grid::differentiate(v, period, 1), utt = grid::differentiate(v, period, 2);
    const CVec uts = grid::differentiate(us, period, 1);
    const RVec w = op.trap_weight.segment(j * n, n);
    const RVec dens = v.cwiseAbs2() + ut.cwiseAbs2() + us.cwiseAbs2() + utt.cwiseAbs2() + uts.cwiseAbs2() +
                      uss.cwiseAbs2();
    acc += w.dot(dens);
  }
  return std::sqrt(acc);
}

RegularityReport regularity_study(const std::function<OperatorPtr(int)>& builder, const RealizationSpec& spec,
                                  cplx lambda, const std::vector<int>& ladder, int samples, unsigned seed) {
  if (ladder.size() < 2) throw ArgumentError("regularity_study: at least two resolutions required");
  RegularityReport rep;
  rep.ladder = ladder;
  for (std::size_t s = 0; s < ladder.size(); ++s) {
    const OperatorPtr op = builder(ladder[s]);
    if (s == 0 && spec.mode == RealizationMode::neumann_type) rep.ellipticity_pass = ellipticity_check(*op, spec).pass;
    const Realization r(op, spec);
    const int n = op->nt(), na = op->grid().interior_size();
    std::mt19937_64 rng(seed + 977u * static_cast<unsigned>(ladder[s]));
    std::normal_distribution<double> nd;
    CMat f = CMat::Zero(na, samples);
    for (int c = 0; c < samples; ++c) {
      for (int i = n; i < na - n; ++i) f(i, c) = cplx(nd(rng), nd(rng));
      f.col(c) /= trap_norm(*op, f.col(c));
    }
    const CMat u = r.direct_solve(lambda, f, CMat());
    double worst = 0.0;
    for (int c = 0; c < samples; ++c) worst = std::max(worst, h2_norm(*op, u.col(c)));
    rep.ratios.push_back(worst);
  }
  const auto [mn, mx] = std::minmax_element(rep.ratios.begin(), rep.ratios.end());
  rep.spread = *mx / *mn;
  rep.growth = rep.ratios.back() / rep.ratios.front();
  rep.bounded = rep.spread <= 2.0;
  return rep;
}

}  // namespace kreinlab::dtn
