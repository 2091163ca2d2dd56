// SPDX-License-Identifier: Apache-2.0
#include "kreinlab/runner.hpp"

#include <benchmark/benchmark.h>

using namespace kreinlab;

namespace {

run::ScenarioConfig rough(int curved) {
  std::string text = R"({"coefficients": {"name": "rough_a11"})";
  if (curved) text += R"(, "geometry": {"bottom": {"amplitude": 0.1, "mode": 1}})";
  return run::ScenarioConfig::parse(text + "}");
}

void BM_resolvent_factor(benchmark::State& st) {
  const auto op = rough(st.range(1)).build(st.range(0), st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(dir::ResolventHandle(op, -1.0).condition());
}
BENCHMARK(BM_resolvent_factor)->ArgsProduct({{32, 64, 128}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_dirichlet_solve(benchmark::State& st) {
  const auto op = rough(0).build(st.range(0), st.range(0));
  const dir::ResolventHandle h(op, -1.0);
  std::mt19937_64 rng(1);
  const auto f = run::white_noise(*op, rng);
  for (auto _ : st) benchmark::DoNotOptimize(h.solve(f));
}
BENCHMARK(BM_dirichlet_solve)->RangeMultiplier(2)->Range(32, 128)->Unit(benchmark::kMicrosecond);

void BM_dtn_assemble(benchmark::State& st) {
  const auto op = rough(st.range(1)).build(st.range(0), st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(dtn::dtn_assemble(op, -1.0));
}
BENCHMARK(BM_dtn_assemble)->ArgsProduct({{16, 32, 64}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_krein_solve(benchmark::State& st) {
  const dtn::Realization real(rough(0).build(st.range(0), st.range(0)), dtn::RealizationSpec::robin(-1.0));
  std::mt19937_64 rng(1);
  const auto f = run::white_noise(real.op(), rng);
  for (auto _ : st) benchmark::DoNotOptimize(dtn::krein_solve(real, cplx(-1.0), f));
}
BENCHMARK(BM_krein_solve)->RangeMultiplier(2)->Range(16, 64)->Unit(benchmark::kMillisecond);

void BM_symbol_smooth(benchmark::State& st) {
  const grid::GridSpec g = grid::GridSpec::strip(st.range(0), 8);
  const auto p = psdo::symbol_from_json(R"({"family": "lacunary_bracket", "order": 1, "tau": 0.375, "delta": 0.5})", g);
  for (auto _ : st) benchmark::DoNotOptimize(psdo::symbol_smooth(p, 0.5));
}
BENCHMARK(BM_symbol_smooth)->RangeMultiplier(2)->Range(128, 512)->Unit(benchmark::kMillisecond);

void BM_extension_oracle(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(run::extension_oracle(7, 10, static_cast<int>(st.range(0))));
}
BENCHMARK(BM_extension_oracle)->Arg(6)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
