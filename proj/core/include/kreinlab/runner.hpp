// SPDX-License-Identifier: Apache-2.0
// Scenario configs, verification suites and report bundles for the command line runner.
#pragma once

#include "kreinlab/dtn_krein.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace kreinlab::run {

inline constexpr const char* kVersion = "0.1.0";
// Default output directory when neither the command line nor the config names one.
inline constexpr const char* kOutputEnv = "KREINLAB_OUTPUT_DIR";

struct GraphShape {
  double amplitude = 0.0;
  int mode = 1;
  bool cosine = false;  // amplitude * cos(mode x) instead of sin
};

struct ScenarioConfig {
  int nt = 32, nn = 32;
  GraphShape bottom, top;
  std::string coefficients = R"({"name": "laplacian"})";  // catalog JSON
  dtn::RealizationSpec realization = dtn::RealizationSpec::robin(-1.0);

  // sweep block
  double eta = 0.75 * kPi;
  std::vector<double> mu{4.0, 8.0, 16.0, 32.0};
  std::vector<cplx> lambdas{cplx(-1.0), std::polar(16.0, 0.75 * kPi)};
  std::vector<int> mesh_ladder{16, 32, 64};
  int decay_nt = 32, decay_nn = 128;
  std::optional<double> remainder_theta;
  cplx regularity_lambda = -1.0;
  cplx dtn_lambda = 0.0;

  double dtn_kmax = 16.0, dtn_tolerance = 1e-3;
  double symbol_tau = 0.375, symbol_delta = 0.5;
  int symbol_points = 512;
  int oracle_trials = 50, oracle_max_dim = 12;

  std::optional<std::vector<std::string>> suites;  // unset: every suite
  std::string output;
  unsigned seed = 7;
  std::string source;  // raw text, hashed into the provenance

  // Usage errors carry the JSON pointer of the offending value.
  static ScenarioConfig parse(const std::string& text);
  static ScenarioConfig load(const std::filesystem::path& path);

  ell::CoefficientField coefficient_field() const;
  geom::StripGeometry geometry(int nt, int nn) const;
  dtn::OperatorPtr build(int nt, int nn) const;
  bool flat() const { return bottom.amplitude == 0.0 && top.amplitude == 0.0; }
};

const std::vector<std::string>& suite_names();
// "a,b,c" -> {a, b, c}; usage error on anything that is not a valid resolution.
std::vector<int> parse_ladder(const std::string& text);

struct Check {
  std::string name;
  double value = 0.0;
  std::string relation;  // "<=", ">=" or "in" (value within threshold of the target)
  double threshold = 0.0;
  bool pass = false;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct SuiteResult {
  std::string name;
  std::vector<Check> checks;
  Table table;
  Table plot;
  std::string error;  // model or runtime error; the suite fails
  double seconds = 0.0;

  bool pass() const;
};

struct ReportBundle {
  std::string config_hash;
  std::string version = kVersion;
  unsigned seed = 0;
  std::vector<SuiteResult> suites;  // ordered by suite name

  bool pass() const;
  const SuiteResult* find(const std::string& name) const;
};

SuiteResult run_suite(const ScenarioConfig& c, const std::string& name);
ReportBundle run(const ScenarioConfig& c);

// <suite>.csv, summary.csv, plot_<suite>.csv and the provenance.json sidecar.
void write_bundle(const ReportBundle& b, const std::filesystem::path& dir);
void write_csv(std::ostream& os, const Table& t);
void write_summary(std::ostream& os, const ReportBundle& b);

// decay: mu, norm, fit_residual, series. dtn: k, measured_symbol_re, measured_symbol_im, closed_form.
// A suite absent from the bundle gives the header alone; suites without plot data are usage errors.
void emit_plot_data(const ReportBundle& b, const std::string& suite, std::ostream& os);

std::string fnv1a_hex(const std::string& text);
std::string format_number(double v);

// --- shared measurements -------------------------------------------------------------

struct OracleStats {
  int trials = 0;
  double round_trip = 0.0;    // subspace distance after T -> realization -> T
  double kernel_range = 0.0;  // ker/ran identities and A_min in A~ in A_max
  double krein = 0.0;         // resolvent via T^lambda
  double m_form = 0.0;        // resolvent via the M-function
  double diagram = 0.0;       // E'^* T^lambda E = T + G
  double m_from_t = 0.0;      // M = -F (T^lambda)^{-1} F'^* for V = Z, W = Z'
  Table rows;
};

// Random dual pairs of dimension 4 .. max_dim with random correspondences.
OracleStats extension_oracle(unsigned seed, int trials, int max_dim);

// Least-squares slope of -log r against log n.
double fitted_order(const std::vector<int>& n, const std::vector<double>& r);

// Sum of c_{k,p} e^{ikx} x_n^p over |k| <= kmax, p <= pmax with random coefficients.
grid::SpectralField smooth_random_field(const grid::GridSpec& g, std::mt19937_64& rng, int kmax = 2, int pmax = 3);
grid::SpectralField white_noise(const ell::EllipticOperator& op, std::mt19937_64& rng);

// -r coth(r L) with r = sqrt(k^2 - lambda): the bottom DtN symbol of -Laplace - lambda on a flat strip of
// height L, lambda <= 0.
double closed_form_dtn_symbol(double k, double lambda, double height = 1.0);
// Largest relative error of the bottom block symbol against the closed form over |k| <= kmax.
double dtn_closed_form_error(const dtn::DtNHandle& p, double kmax);

}  // namespace kreinlab::run
