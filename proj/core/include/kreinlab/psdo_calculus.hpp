// SPDX-License-Identifier: Apache-2.0
// Pseudodifferential operators with rough x-dependence on periodic grids:
// x-form quantization, symbol smoothing, order reducers, Poisson and trace
// operators, chart sums and composition remainders.
#pragma once

#include "kreinlab/domain_geometry.hpp"
#include "kreinlab/spectral_grid.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace kreinlab::psdo {

enum class SymbolKind { interior, boundary };

// p(x, xi) on a torus: rows are x nodes, columns are wave vectors, both in
// flattened row-major order of `shape`. Interior symbols live on the evenly
// reflected strip (normal coordinate first, period 2L).
struct SymbolField {
  std::vector<int> shape;
  std::vector<double> periods;
  CMat values;
  double order = 0.0;
  double delta = 0.0;
  double tau = std::numeric_limits<double>::infinity();  // x-smoothness
  SymbolKind kind = SymbolKind::boundary;

  using Fn = std::function<cplx(const std::vector<double>& x, const std::vector<double>& xi)>;
  static SymbolField sample(const std::vector<int>& shape, const std::vector<double>& periods, const Fn& f,
                            double order, SymbolKind kind);
  static SymbolField boundary(const grid::GridSpec& g, const Fn& f, double order);
  // f receives x = (x_n, x') with x_n folded back into [0, L].
  static SymbolField interior(const grid::GridSpec& g, const Fn& f, double order);

  int points() const { return static_cast<int>(values.rows()); }
  bool x_independent(double tol = 0.0) const;
  SymbolField operator*(const SymbolField& o) const;  // pointwise product, orders add
};

grid::PeriodicSamples op_apply(const SymbolField& p, const grid::PeriodicSamples& u);
grid::SpectralField op_apply(const SymbolField& p, const grid::SpectralField& u);

// Raised-cosine Fourier cutoff in x at |eta| <= 1/eps, per dyadic block in xi,
// with eps_j = 2^{-j delta}.
struct SmoothedSymbol {
  SymbolField sharp, flat;
};
SmoothedSymbol symbol_smooth(const SymbolField& p, double delta);

// C_alpha = max |Delta_xi^alpha p| / <xi>^{m - |alpha|} for |alpha| = 0, 1, 2.
std::array<double, 3> symbol_estimates(const SymbolField& p);

// --- band norms ------------------------------------------------------------
// Wave-vector indices with 2^{j-1} <= |xi| < 2^j (j = 0: xi = 0), Nyquist modes excluded.
std::vector<int> band_indices(const std::vector<int>& shape, const std::vector<double>& periods, int j);
// Operator norm of `op` restricted to band-j inputs, L2 to weighted L2.
// out_weights are quadrature weights of the output samples.
double band_norm(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                 const std::vector<double>& periods, int j, const RVec& out_weights);
// Slope of log2(norm) against the band index.
struct OrderFit {
  std::vector<int> bands;
  std::vector<double> norms;
  double order = 0.0;
  double rms = 0.0;
};
OrderFit fit_band_order(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                        const std::vector<double>& periods, int j_lo, int j_hi, const RVec& out_weights);
OrderFit symbol_band_order(const SymbolField& p, int j_lo, int j_hi);
// Same fit with one probe per band: the mode 3 * 2^{j-2} along the last axis.
// Worst-case band norms of rough multipliers converge only once the band
// resolves the roughness scale; single modes see the L2 size directly.
OrderFit probe_band_order(const std::function<CVec(const CVec&)>& op, const std::vector<int>& shape,
                          const std::vector<double>& periods, int j_lo, int j_hi, const RVec& out_weights);

// --- order reducers ----------------------------------------------------------
enum class ReducerDirection { minus_plus, boundary };
struct OrderReducer {
  double order = 0.0;
  ReducerDirection direction = ReducerDirection::boundary;
};
// boundary: <D'>^s. minus_plus: (<D'> - d_n)^r with an upwind difference in
// x_n and zero extension above the strip; negative r applies the exact inverse.
grid::SpectralField order_reduce(const OrderReducer& r, const grid::SpectralField& u);

// --- Poisson operators -------------------------------------------------------
// k~(x', xi', y_n) per normal layer: values[j](i, m). `order` is the operator
// order d; the symbol-kernel class is d - 1, so the L2 estimates read
// ||y^l d_y^l' k~|| <= C <xi'>^{d - 1/2 - l + l'}.
struct PoissonSymbolKernel {
  grid::GridSpec grid;
  std::vector<CMat> values;
  double order = 0.0;
  double delta = 0.0;
  double tau = std::numeric_limits<double>::infinity();

  using Fn = std::function<cplx(double x, double xi, double y)>;
  static PoissonSymbolKernel sample(const grid::GridSpec& g, const Fn& f, double order);
  // e^{-<xi'> y}, order 0
  static PoissonSymbolKernel semigroup(const grid::GridSpec& g);
};

grid::SpectralField poisson_apply(const PoissonSymbolKernel& k, const grid::SpectralField& v);
// C_{l,l'} for (l, l') = (0,0), (0,1), (1,0), (1,1).
std::array<double, 4> poisson_estimates(const PoissonSymbolKernel& k);
struct SmoothedKernel {
  PoissonSymbolKernel sharp, flat;
};
SmoothedKernel kernel_smooth(const PoissonSymbolKernel& k, double delta);
// sup ||k v||_{H^s(strip)} / ||v||_{H^{s+d-1/2}} over all boundary fields.
double poisson_operator_norm(const PoissonSymbolKernel& k, double s);

// --- trace operators -----------------------------------------------------------
// sum_j s_j(x', D') gamma_j f + int_0^L t0(x', xi', y) f^(xi', y) dy, gamma_j = d_n^j at x_n = 0.
// Negative class -k first applies the order reducer of order -k.
struct TraceSpec {
  std::vector<SymbolField> normal_terms;  // s_j, boundary symbols
  std::optional<PoissonSymbolKernel> integral;
  int cls = 0;
};
grid::SpectralField trace_apply(const TraceSpec& t, const grid::SpectralField& f);

// --- chart sums ------------------------------------------------------------------
struct ChartPiece {
  RVec psi, phi;  // cutoff and partition function on the boundary nodes
  SymbolField p;
  // The map whose boundary restriction is used; null means the identity chart.
  const geom::StripGeometry* chart = nullptr;
  grid::Component component = grid::Component::bottom;
};
// P u = sum psi_j F^{-1,*} p_j F^* (phi_j u); weighted = true uses the kappa-weighted pullbacks.
grid::SpectralField chart_boundary_psdo(const std::vector<ChartPiece>& pieces, const grid::SpectralField& u,
                                        bool weighted = false);

// --- composition ---------------------------------------------------------------
struct CompositionReport {
  OrderFit fit;
  double nominal_order = 0.0;  // m1 + m2
  double required_drop = 0.0;  // 0.8 * min(tau, 1)
  bool negligible = false;     // remainder below 1e-10 on every band
  bool pass = false;
};
CompositionReport composition_remainder(const SymbolField& p1, const SymbolField& p2, int j_lo, int j_hi);

// Catalog: {"kind", "family", "order", "delta", "tau", "amplitude", "value"}; families are
// bracket, rough_bracket, lacunary_bracket, rough_derivative, constant and samples ({"re": [[..]], "im": [[..]]}).
SymbolField symbol_from_json(const std::string& text, const grid::GridSpec& g);

}  // namespace kreinlab::psdo
