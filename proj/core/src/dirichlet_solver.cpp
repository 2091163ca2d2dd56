// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/dirichlet_solver.hpp"

#include "kreinlab/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace kreinlab::dir {

using ell::EllipticOperator;
using grid::Component;
using grid::GridSpec;
using grid::SpectralField;

// --- rays ---------------------------------------------------------------------

double principal_sector_angle(const EllipticOperator& op) {
  const GridSpec& gs = op.grid();
  const auto ax = gs.tangential_axis(0);
  double worst = 0.0;
  for (int j = 0; j < gs.layers(); ++j)
    for (int i = 0; i < gs.tangential_size(); ++i) {
      const auto y = op.geo.point(i, j);
      const ell::Mat2 b = op.coeff.b(y[0], y[1]);
      for (int k = 0; k < 128; ++k) {
        const double th = kPi * k / 128.0, x1 = std::cos(th), x2 = std::sin(th);
        const cplx q = b[0][0] * x1 * x1 + (b[0][1] + b[1][0]) * x1 * x2 + b[1][1] * x2 * x2;
        worst = std::max(worst, std::abs(std::arg(q)));
      }
    }
  return worst;
}

RaySpec RaySpec::make(const EllipticOperator& op, double eta, std::vector<double> mu) {
  RaySpec r;
  r.eta = eta;
  r.mu_values = std::move(mu);
  r.sector_margin = 0.5 * kPi - principal_sector_angle(op);
  r.validate();
  return r;
}

void RaySpec::validate() const {
  if (mu_values.empty()) throw ArgumentError("RaySpec: no mu values");
  for (std::size_t i = 0; i < mu_values.size(); ++i) {
    if (!(mu_values[i] > 0.0)) throw ArgumentError("RaySpec: mu values must be positive");
    if (i > 0 && !(mu_values[i] > mu_values[i - 1])) throw ArgumentError("RaySpec: mu values must increase");
  }
  const double a = std::abs(std::arg(std::polar(1.0, eta)));
  if (!(a > 0.5 * kPi - sector_margin))
    throw ArgumentError("RaySpec: the ray meets the sector of the principal symbol");
}

// --- resolvent ------------------------------------------------------------------

namespace {

int layers_inside(const EllipticOperator& op) { return op.grid().points_normal - 1; }

RVec interior_weights(const EllipticOperator& op) {
  const int n = op.nt();
  return op.node_weight.segment(n, n * layers_inside(op));
}

// Interior rows of (K u) for a full vector u, divided by W: the interior rows of A u.
CVec interior_rows(const EllipticOperator& op, const CVec& ku) {
  const int n = op.nt();
  return ku.segment(n, n * layers_inside(op));
}

}  // namespace

ResolventHandle::ResolventHandle(const EllipticOperator& op, cplx lambda)
    : ResolventHandle(std::make_shared<const EllipticOperator>(op), lambda) {}

ResolventHandle::ResolventHandle(std::shared_ptr<const EllipticOperator> op, cplx lambda)
    : op_(std::move(op)), lambda_(lambda) {
  const bt::BlockTridiag m = op_->form.sub(1, layers_inside(*op_)).shifted(lambda, interior_weights(*op_));
  lu_ = std::make_shared<const bt::BlockLU>(m);
  condition_ = lu_->condition_estimate();
  if (!std::isfinite(condition_) || condition_ > kConditionLimit) {
    std::ostringstream os;
    os << "lambda = " << lambda << " hits the discrete Dirichlet spectrum (condition " << condition_ << ")";
    throw SingularityError(os.str(), condition_);
  }
}

int ResolventHandle::interior_size() const { return op_->nt() * layers_inside(*op_); }

SpectralField ResolventHandle::solve(const SpectralField& f) const {
  if (!(f.grid == op_->grid()) || f.location != grid::Location::interior)
    throw ArgumentError("ResolventHandle::solve: interior field on the operator grid expected");
  const int n = op_->nt();
  const CVec rhs = interior_weights(*op_).cast<cplx>().cwiseProduct(f.values.segment(n, interior_size()));
  SpectralField u = SpectralField::interior(op_->grid());
  u.values.segment(n, interior_size()) = lu_->solve(rhs);
  return u;
}

SpectralField ResolventHandle::solve_adjoint(const SpectralField& f) const {
  if (!(f.grid == op_->grid()) || f.location != grid::Location::interior)
    throw ArgumentError("ResolventHandle::solve_adjoint: interior field on the operator grid expected");
  const int n = op_->nt();
  const CVec rhs = interior_weights(*op_).cast<cplx>().cwiseProduct(f.values.segment(n, interior_size()));
  SpectralField u = SpectralField::interior(op_->grid());
  u.values.segment(n, interior_size()) = lu_->solve_adjoint(rhs);
  return u;
}

CMat ResolventHandle::coupling(const CMat& phi, bool adjoint) const {
  const int n = op_->nt(), nl = op_->layers();
  if (phi.rows() != 2 * n) throw ArgumentError("coupling: boundary data must have 2 nt rows");
  CMat full = CMat::Zero(n * nl, phi.cols());
  full.topRows(n) = phi.topRows(n);
  full.bottomRows(n) = phi.bottomRows(n);
  const CMat k = adjoint ? op_->form_adjoint.apply(full) : op_->form.apply(full);
  return k.middleRows(n, interior_size());
}

namespace {

CMat assemble_full(int n, int interior, const CMat& phi, const CMat& inside) {
  CMat u(2 * n + interior, phi.cols());
  u.topRows(n) = phi.topRows(n);
  u.middleRows(n, interior) = inside;
  u.bottomRows(n) = phi.bottomRows(n);
  return u;
}

}  // namespace

CMat ResolventHandle::poisson(const CMat& phi) const {
  return assemble_full(op_->nt(), interior_size(), phi, -lu_->solve(coupling(phi, false)));
}

CVec ResolventHandle::poisson(const CVec& phi) const { return poisson(CMat(phi)).col(0); }

CMat ResolventHandle::poisson_adjoint(const CMat& phi) const {
  return assemble_full(op_->nt(), interior_size(), phi, -lu_->solve_adjoint(coupling(phi, true)));
}

SpectralField dirichlet_solve(const EllipticOperator& op, cplx lambda, const SpectralField& f) {
  return ResolventHandle(op, lambda).solve(f);
}

SpectralField poisson_solve(const EllipticOperator& op, cplx lambda, const SpectralField& phi, Component comp) {
  if (phi.location != grid::Location::boundary || !(phi.grid == op.grid()))
    throw ArgumentError("poisson_solve: boundary field on the operator grid expected");
  const int n = op.nt();
  CVec data = CVec::Zero(2 * n);
  data.segment(comp == Component::bottom ? 0 : n, n) = phi.values;
  SpectralField u = SpectralField::interior(op.grid());
  u.values = ResolventHandle(op, lambda).poisson(data);
  return u;
}

double interior_residual(const EllipticOperator& op, cplx lambda, const SpectralField& u, const SpectralField& f) {
  const int n = op.nt();
  const RVec w = interior_weights(op);
  const CVec au = interior_rows(op, op.form.apply(u.values)).cwiseQuotient(w.cast<cplx>());
  const CVec r = au - lambda * u.values.segment(n, w.size()) - f.values.segment(n, w.size());
  return r.cwiseAbs().maxCoeff();
}

double interior_norm(const EllipticOperator& op, const CVec& u) {
  const int n = op.nt();
  const RVec w = interior_weights(op);
  return std::sqrt((w.array() * u.segment(n, w.size()).cwiseAbs2().array()).sum());
}

namespace {

double omega_norm(const EllipticOperator& op, const CVec& phi) {
  return std::sqrt((op.omega.array() * phi.cwiseAbs2().array()).sum());
}

double trap_norm(const EllipticOperator& op, const CVec& u) {
  return std::sqrt((op.trap_weight.array() * u.cwiseAbs2().array()).sum());
}

}  // namespace

double poisson_adjoint_check(const ResolventHandle& r, const CVec& phi, const SpectralField& f, Quadrature q) {
  const EllipticOperator& op = r.op();
  const int n = op.nt();
  const CVec u = r.poisson(phi);
  const SpectralField v = r.solve_adjoint(f);
  cplx lhs = 0.0, rhs = 0.0;
  double fnorm = 0.0;
  if (q == Quadrature::discrete) {
    const RVec w = interior_weights(op);
    lhs = f.values.segment(n, w.size()).dot(w.cast<cplx>().cwiseProduct(u.segment(n, w.size())));
    const CVec chi = op.flux_conormal(v.values, true);
    rhs = chi.dot(op.omega.cast<cplx>().cwiseProduct(phi));
    fnorm = interior_norm(op, f.values);
  } else {
    SpectralField uf = SpectralField::interior(op.grid());
    uf.values = u;
    lhs = ell::volume_inner(uf, f, op);
    for (Component c : {Component::bottom, Component::top}) {
      SpectralField pc = SpectralField::boundary(op.grid());
      pc.values = phi.segment(c == Component::bottom ? 0 : n, n);
      rhs += ell::boundary_inner(pc, ell::conormal_trace(v, op, c, true), op, c);
    }
    fnorm = trap_norm(op, f.values);
  }
  const double scale = omega_norm(op, phi) * fnorm;
  return scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
}

double resolvent_norm(const ResolventHandle& r, int iterations, unsigned seed) {
  const RVec wh = interior_weights(r.op()).cwiseSqrt();
  std::mt19937_64 rng(seed);
  CVec x = la::random_complex(wh.size(), 1, rng).col(0);
  x.normalize();
  double est = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const CVec y = wh.cast<cplx>().cwiseProduct(r.solve_interior(CMat(wh.cast<cplx>().cwiseProduct(x))).col(0));
    est = y.norm();
    const CVec z =
        wh.cast<cplx>().cwiseProduct(r.solve_interior_adjoint(CMat(wh.cast<cplx>().cwiseProduct(y))).col(0));
    if (z.norm() == 0.0) break;
    x = z / z.norm();
  }
  return est;
}

double poisson_norm(const ResolventHandle& r) {
  const EllipticOperator& op = r.op();
  const int nb = 2 * op.nt();
  const CMat p = r.poisson(CMat(CMat::Identity(nb, nb)));
  const CMat g = p.adjoint() * op.trap_weight.cast<cplx>().asDiagonal() * p;
  const RVec oi = op.omega.cwiseSqrt().cwiseInverse();
  const CMat s = oi.cast<cplx>().asDiagonal() * g * oi.cast<cplx>().asDiagonal();
  Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (s + s.adjoint()), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

double resolvent_identity_residual(const EllipticOperator& op, cplx l1, cplx l2, const SpectralField& f) {
  auto sp = std::make_shared<const EllipticOperator>(op);
  const ResolventHandle r1(sp, l1), r2(sp, l2);
  const SpectralField a = r1.solve(f), b = r2.solve(f);
  const SpectralField ab = r1.solve(b);
  const CVec d = a.values - b.values - (l1 - l2) * ab.values;
  return trap_norm(op, d) / std::max(trap_norm(op, a.values), 1e-300);
}

double homeomorphism_defect(const ResolventHandle& r) {
  const EllipticOperator& op = r.op();
  const int n = op.nt(), ni = r.interior_size();
  CMat rows = op.form.to_dense().middleRows(n, ni);
  const RVec w = interior_weights(op);
  for (int i = 0; i < ni; ++i) rows(i, n + i) -= r.lambda() * w(i);
  const CMat z = la::null_space(rows);
  if (z.cols() != 2 * n) return std::numeric_limits<double>::infinity();
  // gamma_0 K = id holds by construction; check it anyway with unit vectors
  const CMat k = r.poisson(CMat(CMat::Identity(2 * n, 2 * n)));
  CMat g0k(2 * n, 2 * n);
  g0k << k.topRows(n), k.bottomRows(n);
  double defect = (g0k - CMat::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff();
  CMat g0z(2 * n, z.cols());
  g0z << z.topRows(n), z.bottomRows(n);
  const CMat back = r.poisson(g0z);
  for (Eigen::Index c = 0; c < z.cols(); ++c) defect = std::max(defect, (back.col(c) - z.col(c)).norm());
  return defect;
}

// --- parametrix ---------------------------------------------------------------

namespace {

double partition_bottom(double t) {
  if (t <= 1.0 / 3.0) return 1.0;
  if (t >= 2.0 / 3.0) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (3.0 * t - 1.0)));
}

// Thomas algorithm for a scalar tridiagonal system with constant off-diagonals.
CVec thomas(int m, cplx lo, const CVec& diag, cplx up, CVec rhs) {
  CVec d = diag;
  for (int j = 1; j < m; ++j) {
    const cplx f = lo / d(j - 1);
    d(j) -= f * up;
    rhs(j) -= f * rhs(j - 1);
  }
  CVec x(m);
  x(m - 1) = rhs(m - 1) / d(m - 1);
  for (int j = m - 2; j >= 0; --j) x(j) = (rhs(j) - up * x(j + 1)) / d(j);
  return x;
}

}  // namespace

cplx decaying_root(cplx a2, cplx a1, cplx a0) {
  const cplx disc = std::sqrt(a1 * a1 - 4.0 * a2 * a0);
  const cplx r1 = (-a1 + disc) / (2.0 * a2), r2 = (-a1 - disc) / (2.0 * a2);
  const cplx r = std::abs(r1) < std::abs(r2) ? r1 : r2;
  if (std::abs(std::abs(r) - 1.0) < 1e-10)
    throw ModelError("characteristic root on the unit circle (frozen symbol not elliptic)");
  if (std::abs(r) > 1.0) throw ModelError("frozen recurrence has no decaying root");
  return r;
}

Parametrix::Parametrix(const EllipticOperator& op, cplx lambda)
    : op_(std::make_shared<const EllipticOperator>(op)), lambda_(lambda) {
  const GridSpec& gs = op.grid();
  const int nt = gs.tangential_size(), nl = gs.layers(), nn = gs.points_normal;
  ell::CoefficientField principal = op.coeff;
  principal.a = [](double, double) { return ell::Vec2{0.0, 0.0}; };
  principal.a0 = [](double, double) { return cplx(0.0); };
  const ell::ReferenceCoefficients rc = ell::reference_coefficients(principal, op.geo);
  const double h = gs.h_normal(), hp = gs.tangential_cell();
  const int jm = nn / 2;
  for (Chart* c : {&bottom_, &top_}) {
    const bool bottom = c == &bottom_;
    const int jb = bottom ? 0 : nn;
    c->lower.resize(nt, nt);
    c->diag.resize(nt, nt);
    c->upper.resize(nt, nt);
    c->root.resize(nt, nt);
    c->weight.resize(nt);
    for (int i = 0; i < nt; ++i) {
      ell::ReferenceCoefficients fr;
      const int node = jb * nt + i;
      for (int q = 0; q < 4; ++q) fr.bf[q] = CVec::Constant(nt * nl, rc.bf[q](node));
      for (auto& b : fr.beta) b = CVec::Zero(nt * nl);
      fr.mass = CVec::Zero(nt * nl);
      fr.tangentially_constant = true;
      const bt::BlockTridiag k = ell::assemble_form(fr, gs);
      const double w = hp * h * op.geo.diffeo.nodes.fn(jb, i);
      c->weight(i) = w;
      for (int m = 0; m < nt; ++m) {
        const cplx lo = k.mlower[jm - 1](m), dg = k.mdiag[jm](m) - lambda * w, up = k.mupper[jm](m);
        c->lower(i, m) = lo;
        c->diag(i, m) = dg;
        c->upper(i, m) = up;
        c->root(i, m) = bottom ? decaying_root(up, dg, lo) : decaying_root(lo, dg, up);
      }
    }
  }
  synth_.resize(nt, nt);
  for (int m = 0; m < nt; ++m) synth_.col(m) = bt::from_modes(CVec(CVec::Unit(nt, m)));
}

CMat Parametrix::solve_chart(const Chart& c, bool bottom, const std::vector<CVec>& fhat, const CVec& phihat,
                             int i) const {
  const GridSpec& gs = op_->grid();
  const int nt = gs.tangential_size(), nn = gs.points_normal, m = nn - 1;
  CMat out(nt, nn + 1);
  CVec diag(m), rhs(m);
  for (int k = 0; k < nt; ++k) {
    const cplx lo = c.lower(i, k), dg = c.diag(i, k), up = c.upper(i, k), r = c.root(i, k);
    diag.setConstant(dg);
    for (int j = 1; j <= m; ++j) rhs(j - 1) = c.weight(i) * fhat[j](k);
    if (bottom) {
      rhs(0) -= lo * phihat(k);
      diag(m - 1) += up * r;
    } else {
      rhs(m - 1) -= up * phihat(k);
      diag(0) += lo * r;
    }
    const CVec x = thomas(m, lo, diag, up, rhs);
    for (int j = 1; j <= m; ++j) out(k, j) = x(j - 1);
    if (bottom) {
      out(k, 0) = phihat(k);
      out(k, nn) = r * x(m - 1);
    } else {
      out(k, nn) = phihat(k);
      out(k, 0) = r * x(0);
    }
  }
  return out;
}

SpectralField Parametrix::apply(const SpectralField& f, const CVec& phi) const {
  const GridSpec& gs = op_->grid();
  const int nt = gs.tangential_size(), nl = gs.layers();
  if (!(f.grid == gs) || f.location != grid::Location::interior || phi.size() != 2 * nt)
    throw ArgumentError("Parametrix::apply: data do not match the grid");
  std::vector<CVec> fb(nl), ft(nl);
  for (int j = 0; j < nl; ++j) {
    const double pb = partition_bottom(gs.x_normal(j) / gs.normal_extent);
    const CVec layer = bt::to_modes(f.values.segment(j * nt, nt));
    fb[j] = pb * layer;
    ft[j] = (1.0 - pb) * layer;
  }
  const CVec pb = bt::to_modes(phi.head(nt)), pt = bt::to_modes(phi.tail(nt));
  SpectralField u = SpectralField::interior(gs);
  for (int i = 0; i < nt; ++i) {
    const CMat uh = solve_chart(bottom_, true, fb, pb, i) + solve_chart(top_, false, ft, pt, i);
    const CVec vals = synth_.row(i) * uh;
    for (int j = 0; j < nl; ++j) u.at(i, j) = vals(j);
  }
  return u;
}

CVec Parametrix::bottom_mode_profile(int i, int m) const {
  const GridSpec& gs = op_->grid();
  const int nt = gs.tangential_size();
  std::vector<CVec> zero(gs.layers(), CVec::Zero(nt));
  return solve_chart(bottom_, true, zero, CVec::Unit(nt, m), i).row(m).transpose();
}

SpectralField parametrix_apply(const EllipticOperator& op, cplx lambda, const SpectralField& f, const CVec& phi) {
  return Parametrix(op, lambda).apply(f, phi);
}

std::vector<ParametrixData> parametrix_suite(const GridSpec& g, unsigned seed, int kmax) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const int nt = g.tangential_size();
  const auto ax = g.tangential_axis(0);
  auto field = [&] {
    SpectralField f = SpectralField::interior(g);
    for (int k = -kmax; k <= kmax; ++k) {
      const cplx c = cplx(nd(rng), nd(rng)) / (1.0 + k * k);
      const double a = 2.0 * ud(rng), b = kPi * ud(rng);
      for (int j = 0; j < g.layers(); ++j)
        for (int i = 0; i < nt; ++i)
          f.at(i, j) += c * std::exp(kI * double(k) * ax[i]) * std::cos(kPi * a * g.x_normal(j) + b);
    }
    return f;
  };
  auto boundary = [&] {
    CVec phi = CVec::Zero(2 * nt);
    for (int k = -kmax; k <= kmax; ++k)
      for (int c = 0; c < 2; ++c) {
        const cplx a = cplx(nd(rng), nd(rng)) / (1.0 + k * k);
        for (int i = 0; i < nt; ++i) phi(c * nt + i) += a * std::exp(kI * double(k) * ax[i]);
      }
    return phi;
  };
  std::vector<ParametrixData> s;
  s.push_back({field(), CVec::Zero(2 * nt)});
  s.push_back({SpectralField::interior(g), boundary()});
  s.push_back({field(), boundary()});
  return s;
}

double boundary_norm_mu(const CVec& phi, const GridSpec& g, double s, double mu) {
  const int nt = g.tangential_size();
  const auto k = grid::wavenumbers(nt, g.periods[0]);
  double acc = 0.0;
  for (int c = 0; c < 2; ++c) {
    const CVec hat = bt::to_modes(phi.segment(c * nt, nt));
    for (int m = 0; m < nt; ++m) acc += std::pow(1.0 + k[m] * k[m] + mu * mu, s) * std::norm(hat(m));
  }
  return std::sqrt(g.periods[0] * acc);
}

namespace {

double remainder_of(const Parametrix& p, const EllipticOperator& op, cplx lambda, double mu,
                    const ParametrixData& d) {
  const int n = op.nt(), nl = op.layers();
  const SpectralField u = p.apply(d.f, d.phi);
  const RVec w = interior_weights(op);
  CVec res = CVec::Zero(n * nl);
  res.segment(n, w.size()) = interior_rows(op, op.form.apply(u.values)).cwiseQuotient(w.cast<cplx>()) -
                             lambda * u.values.segment(n, w.size()) - d.f.values.segment(n, w.size());
  CVec trace(2 * n);
  trace << u.values.head(n) - d.phi.head(n), u.values.tail(n) - d.phi.tail(n);
  const GridSpec& g = op.grid();
  const double num = interior_norm(op, res) + boundary_norm_mu(trace, g, 1.5, mu);
  const double den = interior_norm(op, d.f.values) + boundary_norm_mu(d.phi, g, 1.5, mu);
  return num / den;
}

}  // namespace

double parametrix_remainder(const EllipticOperator& op, cplx lambda, double mu, const ParametrixData& d) {
  return remainder_of(Parametrix(op, lambda), op, lambda, mu, d);
}

// --- sweeps -------------------------------------------------------------------

DecayFit fit_decay(std::vector<SweepRow> rows) {
  DecayFit fit;
  std::vector<double> x, y;
  for (const auto& r : rows) {
    x.push_back(0.5 * std::log1p(r.mu * r.mu));
    y.push_back(std::log(std::max(r.value, 1e-300)));
  }
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].value > 1.05 * rows[i - 1].value) fit.monotone = false;
  if (rows.size() >= 2) {
    const la::LineFit lf = la::fit_line(x, y);
    fit.slope = lf.slope;
    fit.fit_residual = lf.residual;
  }
  fit.rows = std::move(rows);
  return fit;
}

DecayFit resolvent_decay(const EllipticOperator& op, const RaySpec& ray) {
  ray.validate();
  auto sp = std::make_shared<const EllipticOperator>(op);
  std::vector<SweepRow> rows;
  for (double mu : ray.mu_values) {
    const ResolventHandle r(sp, ray.lambda(mu));
    rows.push_back({mu, ray.lambda(mu), "resolvent_l2", resolvent_norm(r)});
  }
  return fit_decay(std::move(rows));
}

DecayFit poisson_decay(const EllipticOperator& op, const RaySpec& ray) {
  ray.validate();
  auto sp = std::make_shared<const EllipticOperator>(op);
  std::vector<SweepRow> rows;
  for (double mu : ray.mu_values) {
    const ResolventHandle r(sp, ray.lambda(mu));
    rows.push_back({mu, ray.lambda(mu), "poisson_l2", poisson_norm(r)});
  }
  return fit_decay(std::move(rows));
}

RemainderReport remainder_decay(const EllipticOperator& op, const RaySpec& ray,
                                const std::vector<ParametrixData>& suite, double theta) {
  ray.validate();
  if (suite.empty()) throw ArgumentError("remainder_decay: empty data suite");
  std::vector<SweepRow> rows;
  for (double mu : ray.mu_values) {
    const cplx l = ray.lambda(mu);
    const Parametrix p(op, l);
    double worst = 0.0;
    for (const auto& d : suite) worst = std::max(worst, remainder_of(p, op, l, mu, d));
    rows.push_back({mu, l, "parametrix_remainder", worst});
  }
  RemainderReport rep;
  rep.fit = fit_decay(std::move(rows));
  rep.theta = theta;
  rep.target = -0.8 * theta;
  rep.pass = rep.fit.slope <= rep.target;
  return rep;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows, bool header) {
  if (header) os << "mu,lambda_re,lambda_im,norm_name,value\n";
  std::ostringstream line;
  line << std::setprecision(12);
  for (const auto& r : rows) {
    line.str("");
    line << r.mu << ',' << r.lambda.real() << ',' << r.lambda.imag() << ',' << r.norm_name << ',' << r.value << '\n';
    os << line.str();
  }
}

}  // namespace kreinlab::dir
