// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/extension_core.hpp"

#include "kreinlab/errors.hpp"

#include <Eigen/LU>

#include <cmath>

namespace kreinlab::ext {

namespace {

constexpr double kContainTol = 1e-8;

CMat stack(const CMat& top, const CMat& bottom) {
  CMat s(top.rows() + bottom.rows(), top.cols());
  s << top, bottom;
  return s;
}

CMat invert_checked(const CMat& a, const char* what) {
  Eigen::FullPivLU<CMat> lu(a);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) throw SingularityError(std::string(what) + " is singular");
  const double rc = lu.rcond();
  if (rc < 1e-14) throw SingularityError(std::string(what) + " is numerically singular", 1.0 / rc);
  return lu.inverse();
}

}  // namespace

SubspaceGraph SubspaceGraph::span(const CMat& columns, Eigen::Index n) {
  if (columns.rows() != 2 * n) throw ArgumentError("graph: columns must have 2n rows");
  return {n, la::orth(columns)};
}

SubspaceGraph SubspaceGraph::of_matrix(const CMat& m) {
  if (m.rows() != m.cols()) throw ArgumentError("graph: square matrix expected");
  return span(stack(CMat::Identity(m.rows(), m.cols()), m), m.rows());
}

SubspaceGraph SubspaceGraph::of_restriction(const CMat& m, const CMat& domain) {
  if (domain.rows() != m.cols()) throw ArgumentError("graph: domain shape mismatch");
  return span(stack(domain, m * domain), m.rows());
}

CMat SubspaceGraph::domain() const { return la::orth(top()); }
CMat SubspaceGraph::range() const { return la::orth(bottom()); }

CMat SubspaceGraph::kernel() const {
  CMat ns = la::null_space(bottom());
  if (ns.cols() == 0) return CMat(n, 0);
  return la::orth(top() * ns);
}

CMat SubspaceGraph::multivalued_part() const {
  CMat ns = la::null_space(top());
  if (ns.cols() == 0) return CMat(n, 0);
  return la::orth(bottom() * ns);
}

bool SubspaceGraph::is_operator(double tol) const {
  CMat ns = la::null_space(top(), tol);
  if (ns.cols() == 0) return true;
  return (bottom() * ns).norm() < 1e-8;
}

CMat SubspaceGraph::operator_matrix() const {
  if (dim() != n) throw ArgumentError("graph: operator does not have full domain");
  return bottom() * invert_checked(top(), "graph domain block");
}

double distance(const SubspaceGraph& a, const SubspaceGraph& b) {
  return la::subspace_distance(a.basis, b.basis);
}

double inclusion_defect(const SubspaceGraph& small, const SubspaceGraph& big) {
  return la::containment_defect(small.basis, big.basis);
}

SubspaceGraph adjoint_relation(const SubspaceGraph& g) {
  const CMat j = stack(-g.bottom(), g.top());
  return {g.n, la::complement(j, 2 * g.n)};
}

SubspaceGraph shifted(const SubspaceGraph& g, cplx lambda) {
  return SubspaceGraph::span(stack(g.top(), g.bottom() - lambda * g.top()), g.n);
}

CMat resolvent_of(const SubspaceGraph& g, cplx lambda) {
  if (g.dim() != g.n) throw SingularityError("relation minus lambda is not bijective (dimension mismatch)");
  const CMat shifted_range = g.bottom() - lambda * g.top();
  return g.top() * invert_checked(shifted_range, "relation minus lambda");
}

DualPair DualPair::make(const SubspaceGraph& a_min, const SubspaceGraph& a_min_prime, const SubspaceGraph& a_gamma) {
  DualPair p;
  p.a_min = a_min;
  p.a_min_prime = a_min_prime;
  p.a_gamma = a_gamma;
  if (a_min.n != a_gamma.n || a_min_prime.n != a_gamma.n) throw ArgumentError("dual pair: ambient dimensions differ");
  p.a_max = adjoint_relation(a_min_prime);
  p.a_max_prime = adjoint_relation(a_min);
  if (inclusion_defect(a_min, p.a_max) > kContainTol || inclusion_defect(a_min_prime, p.a_max_prime) > kContainTol)
    throw ArgumentError("dual pair: A_min is not contained in (A'_min)*");
  if (inclusion_defect(a_min, a_gamma) > kContainTol || inclusion_defect(a_gamma, p.a_max) > kContainTol)
    throw ArgumentError("dual pair: A_gamma is not between A_min and A_max");
  p.a_gamma_op = a_gamma.operator_matrix();
  invert_checked(p.a_gamma_op, "A_gamma");
  p.z = p.a_max.kernel();
  p.z_prime = p.a_max_prime.kernel();
  return p;
}

CMat DualPair::resolvent(cplx lambda) const {
  const Eigen::Index m = n();
  return invert_checked(a_gamma_op - lambda * CMat::Identity(m, m), "A_gamma - lambda");
}

CMat DualPair::resolvent_prime(cplx lambda) const {
  const Eigen::Index m = n();
  return invert_checked(CMat(a_gamma_op.adjoint()) - lambda * CMat::Identity(m, m), "A'_gamma - lambda");
}

CMat DualPair::e_lambda(cplx lambda) const {
  return CMat::Identity(n(), n()) + lambda * resolvent(lambda);
}

CMat DualPair::f_lambda(cplx lambda) const {
  return CMat::Identity(n(), n()) - lambda * resolvent(0.0);
}

CMat DualPair::e_prime(cplx lambda) const {
  return CMat::Identity(n(), n()) + lambda * resolvent_prime(lambda);
}

CMat DualPair::f_prime(cplx lambda) const {
  return CMat::Identity(n(), n()) - lambda * resolvent_prime(0.0);
}

CMat Correspondence::kernel() const {
  if (v_basis.cols() == 0) return CMat(v_basis.rows(), 0);
  if (w_basis.cols() == 0) return v_basis;
  CMat ns = la::null_space(t_matrix);
  return ns.cols() ? la::orth(v_basis * ns) : CMat(v_basis.rows(), 0);
}

CMat Correspondence::range() const {
  if (v_basis.cols() == 0 || w_basis.cols() == 0) return CMat(w_basis.rows(), 0);
  return la::orth(w_basis * t_matrix);
}

Decomposition kernel_and_decompose(const DualPair& pair, const CVec& u, const CVec& f, cplx lambda) {
  const Eigen::Index n = pair.n();
  if (u.size() != n || f.size() != n) throw ArgumentError("decompose: vector size mismatch");
  CMat uf(2 * n, 1);
  uf << u, f;
  const double scale = std::max(1.0, uf.norm());
  if (la::containment_defect(uf / scale, pair.a_max.basis) > kContainTol)
    throw ArgumentError("decompose: (u, f) is not in A_max");
  Decomposition d;
  d.u_gamma = pair.resolvent(lambda) * (f - lambda * u);
  d.u_zeta = u - d.u_gamma;
  return d;
}

Correspondence make_correspondence(const CMat& v_basis, const CMat& w_basis, const CMat& t_matrix) {
  Correspondence c;
  c.v_basis = v_basis;
  c.w_basis = w_basis;
  c.t_matrix = t_matrix;
  const Eigen::Index n = v_basis.rows();
  if (v_basis.cols() > 0)
    c.t_graph = SubspaceGraph::span(stack(v_basis, w_basis.cols() ? CMat(w_basis * t_matrix) : CMat::Zero(n, v_basis.cols())), n);
  else
    c.t_graph = {n, CMat(2 * n, 0)};
  return c;
}

Correspondence correspondence_at(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda) {
  if (inclusion_defect(pair.a_min, a_tilde) > kContainTol || inclusion_defect(a_tilde, pair.a_max) > kContainTol)
    throw ArgumentError("realization is not between A_min and A_max");
  const Eigen::Index n = pair.n();
  const CMat r = pair.resolvent(lambda);
  const CMat u = a_tilde.top(), f = a_tilde.bottom();
  const CMat shifted_f = f - lambda * u;
  const CMat uz = u - r * shifted_f;
  const CMat v = la::orth_scaled(uz, std::max(1.0, r.norm()));

  const SubspaceGraph adj = adjoint_relation(a_tilde);
  const CMat rp = pair.resolvent_prime(std::conj(lambda));
  const CMat wz = adj.top() - rp * (adj.bottom() - std::conj(lambda) * adj.top());
  const CMat w = la::orth_scaled(wz, std::max(1.0, rp.norm()));

  CMat t = CMat::Zero(w.cols(), v.cols());
  if (v.cols() > 0 && w.cols() > 0) {
    const CMat a = v.adjoint() * uz;
    const CMat b = w.adjoint() * shifted_f;
    // a has full row rank; solve t a = b in the least squares sense.
    t = a.transpose().colPivHouseholderQr().solve(b.transpose()).transpose();
    const double res = (t * a - b).norm();
    if (res > 1e-7 * std::max(1.0, b.norm())) throw ArgumentError("realization yields a multivalued T");
  }
  (void)n;
  return make_correspondence(v, w, t);
}

Correspondence realization_to_T(const DualPair& pair, const SubspaceGraph& a_tilde) {
  return correspondence_at(pair, a_tilde, 0.0);
}

SubspaceGraph T_to_realization(const DualPair& pair, const Correspondence& corr) {
  const Eigen::Index n = pair.n();
  const CMat& v = corr.v_basis;
  const CMat& w = corr.w_basis;
  if (v.rows() != n || w.rows() != n) throw ArgumentError("correspondence: basis size mismatch");
  if (la::containment_defect(v, pair.z) > kContainTol) throw ArgumentError("correspondence: V is not inside Z");
  if (la::containment_defect(w, pair.z_prime) > kContainTol) throw ArgumentError("correspondence: W is not inside Z'");
  if (corr.t_matrix.rows() != w.cols() || corr.t_matrix.cols() != v.cols())
    throw ArgumentError("correspondence: T matrix shape mismatch");
  const CMat r0 = pair.resolvent(0.0);
  const CMat wperp = la::complement(w, n);
  CMat cols(2 * n, v.cols() + wperp.cols());
  const CMat tv = w.cols() ? CMat(w * corr.t_matrix) : CMat::Zero(n, v.cols());
  if (v.cols()) cols.leftCols(v.cols()) = stack(r0 * tv + v, tv);
  if (wperp.cols()) cols.rightCols(wperp.cols()) = stack(r0 * wperp, wperp);
  return SubspaceGraph::span(cols, n);
}

CMat g_lambda(const DualPair& pair, const CMat& v_basis, const CMat& w_basis, cplx lambda) {
  return -lambda * (w_basis.adjoint() * pair.e_lambda(lambda) * v_basis);
}

CMat m_function(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda, const CMat& v_basis,
                const CMat& w_basis) {
  const CMat r0 = pair.resolvent(0.0);
  const CMat rt = resolvent_of(a_tilde, lambda);
  const CMat x = r0 * w_basis;
  const CMat y = x - rt * (w_basis - lambda * x);
  const CMat m = y - lambda * (r0 * y);
  if (v_basis.cols() == 0) return CMat(0, w_basis.cols());
  return v_basis.adjoint() * m;
}

CMat m_function(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda) {
  const Correspondence c = realization_to_T(pair, a_tilde);
  return m_function(pair, a_tilde, lambda, c.v_basis, c.w_basis);
}

KreinCheck krein_resolvent_check(const DualPair& pair, const SubspaceGraph& a_tilde, cplx lambda) {
  const CMat direct = resolvent_of(a_tilde, lambda);
  const CMat rg = pair.resolvent(lambda);
  const double scale = std::max(direct.norm(), 1e-300);

  const Correspondence tl = correspondence_at(pair, a_tilde, lambda);
  if (tl.t_matrix.rows() != tl.t_matrix.cols()) throw SingularityError("T^lambda is not square");
  CMat form1 = rg;
  if (tl.v_basis.cols()) form1 += tl.v_basis * invert_checked(tl.t_matrix, "T^lambda") * tl.w_basis.adjoint();

  const Correspondence c0 = realization_to_T(pair, a_tilde);
  CMat form2 = rg;
  if (c0.v_basis.cols()) {
    const CMat m = m_function(pair, a_tilde, lambda, c0.v_basis, c0.w_basis);
    const CMat ev = tl.v_basis.adjoint() * pair.e_lambda(lambda) * c0.v_basis;
    const CMat ew = tl.w_basis.adjoint() * pair.e_prime(std::conj(lambda)) * c0.w_basis;
    form2 -= tl.v_basis * ev * m * ew.adjoint() * tl.w_basis.adjoint();
  }
  return {(form1 - direct).norm() / scale, (form2 - direct).norm() / scale};
}

DualPair random_dual_pair(std::mt19937_64& rng, int n, int d) {
  if (d < 1 || d >= n) throw ArgumentError("random_dual_pair: need 1 <= d < n");
  CMat m = la::random_complex(n, n, rng) / std::sqrt(double(n));
  const CMat dmin = la::orth(la::random_complex(n, n - d, rng));
  const CMat dmin_p = la::orth(la::random_complex(n, n - d, rng));
  const CMat dperp = la::complement(dmin, n);
  const CMat dperp_p = la::complement(dmin_p, n);
  const CMat k = dperp_p * la::random_complex(d, d, rng) * dperp.adjoint() / std::sqrt(double(d));
  // shift until A_gamma is comfortably invertible
  for (int tries = 0; tries < 50; ++tries) {
    const CMat ag = m + k;
    if (la::smallest_singular_value(ag) > 0.05 * la::spectral_norm(ag)) break;
    m += 0.5 * CMat::Identity(n, n);
  }
  return DualPair::make(SubspaceGraph::of_restriction(m, dmin),
                        SubspaceGraph::of_restriction(m.adjoint(), dmin_p),
                        SubspaceGraph::of_matrix(m + k));
}

DualPair laplacian_pair(int n) {
  if (n < 3) throw ArgumentError("laplacian_pair: need n >= 3");
  const double h = 1.0 / (n + 1);
  CMat m = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    m(i, i) = 2.0 / (h * h);
    if (i > 0) m(i, i - 1) = -1.0 / (h * h);
    if (i + 1 < n) m(i, i + 1) = -1.0 / (h * h);
  }
  const CMat dmin = CMat::Identity(n, n).middleCols(1, n - 2);
  return DualPair::make(SubspaceGraph::of_restriction(m, dmin), SubspaceGraph::of_restriction(m, dmin),
                        SubspaceGraph::of_matrix(m));
}

Correspondence random_correspondence(const DualPair& pair, std::mt19937_64& rng, int dim_v, int dim_w) {
  const auto pick = [&](const CMat& space, int k) -> CMat {
    if (k <= 0) return CMat(space.rows(), 0);
    if (k > space.cols()) throw ArgumentError("random_correspondence: subspace dimension too large");
    return la::orth(space * la::random_complex(space.cols(), k, rng));
  };
  const CMat v = pick(pair.z, dim_v);
  const CMat w = pick(pair.z_prime, dim_w);
  return make_correspondence(v, w, la::random_complex(w.cols(), v.cols(), rng));
}

}  // namespace kreinlab::ext
