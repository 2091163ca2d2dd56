// SPDX-License-Identifier: Apache-2.0
// kreinlab run <config> [--out DIR] [--suite NAME ...] [--seed N] [--mesh-ladder a,b,c]
// kreinlab plot <config> <decay|dtn> [--out FILE] [...same overrides]
#include "kreinlab/errors.hpp"
#include "kreinlab/runner.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

struct Overrides {
  std::vector<std::string> suites;
  std::optional<unsigned> seed;
  std::string ladder;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--suite", o.suites, "suite to run (repeatable)")
      ->check(CLI::IsMember(kreinlab::run::suite_names()));
  cmd->add_option("--seed", o.seed, "seed for every random draw");
  cmd->add_option("--mesh-ladder", o.ladder, "comma separated resolutions, e.g. 16,32,64");
}

kreinlab::run::ScenarioConfig configure(const std::string& path, const Overrides& o) {
  auto c = kreinlab::run::ScenarioConfig::load(path);
  if (!o.suites.empty()) c.suites = o.suites;
  if (o.seed) c.seed = *o.seed;
  if (!o.ladder.empty()) c.mesh_ladder = kreinlab::run::parse_ladder(o.ladder);
  return c;
}

void print(const kreinlab::run::ReportBundle& b) {
  for (const auto& s : b.suites) {
    std::cout << (s.pass() ? "PASS " : "FAIL ") << s.name;
    if (!s.error.empty()) std::cout << "  (" << s.error << ")";
    std::cout << '\n';
    for (const auto& c : s.checks)
      if (!c.pass) std::cout << "       " << c.name << " = " << c.value << " (" << c.relation << " " << c.threshold << ")\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary realization experiments on periodic strips"};
  app.require_subcommand(1);

  Overrides ro, po;
  std::string run_config, run_out, plot_config, plot_suite, plot_out;
  auto* run = app.add_subcommand("run", "run the suites of a scenario and write a report bundle");
  run->add_option("config", run_config, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "output directory");
  add_overrides(run, ro);

  auto* plot = app.add_subcommand("plot", "run one suite and print its plot table");
  plot->add_option("config", plot_config, "scenario JSON")->required()->check(CLI::ExistingFile);
  plot->add_option("name", plot_suite, "suite with plot data: decay or dtn")->required();
  plot->add_option("--out", plot_out, "file instead of stdout");
  add_overrides(plot, po);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto c = configure(run_config, ro);
      std::string out = run_out;
      if (out.empty()) out = c.output;
      if (const char* env = std::getenv(kreinlab::run::kOutputEnv); out.empty() && env) out = env;
      if (out.empty()) out = "kreinlab_out";
      const auto b = kreinlab::run::run(c);
      kreinlab::run::write_bundle(b, out);
      print(b);
      std::cout << (b.pass() ? "all suites passed" : "some suites failed") << "; bundle in " << out << '\n';
      return b.pass() ? 0 : 1;
    }
    auto c = configure(plot_config, po);
    c.suites = std::vector<std::string>{plot_suite};
    kreinlab::run::ReportBundle b;
    b.suites.push_back(kreinlab::run::run_suite(c, plot_suite));
    if (plot_out.empty()) {
      kreinlab::run::emit_plot_data(b, plot_suite, std::cout);
    } else {
      std::ofstream f(plot_out);
      kreinlab::run::emit_plot_data(b, plot_suite, f);
    }
    return b.pass() ? 0 : 1;
  } catch (const kreinlab::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
