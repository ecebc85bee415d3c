#include "rhfusion/log.hpp"
#include "rhfusion/scenario_io.hpp"
#include "rhfusion/simulation.hpp"

#include <benchmark/benchmark.h>

#ifndef RHFUSION_SCENARIO_DIR
#define RHFUSION_SCENARIO_DIR "scenarios"
#endif

namespace {

rhf::Scenario watertank(std::size_t runs) {
  rhf::ScenarioParts parts = rhf::load_scenario(std::string(RHFUSION_SCENARIO_DIR) + "/watertank.json",
                                                {"mc_runs=" + std::to_string(runs)});
  rhf::ValidationResult v = rhf::validate(std::move(parts.system), std::move(parts.suite), parts.config);
  return *v.scenario;
}

void BM_Reference(benchmark::State& state) {
  rhf::set_quiet(true);
  const rhf::Scenario sc = watertank(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rhf::run_monte_carlo_reference(sc, sc.config().mc_runs));
}

void BM_Parallel(benchmark::State& state) {
  rhf::set_quiet(true);
  const rhf::Scenario sc = watertank(static_cast<std::size_t>(state.range(0)));
  rhf::MonteCarloOptions opt;
  opt.threads = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(rhf::run_monte_carlo(sc, opt));
}

}  // namespace

BENCHMARK(BM_Reference)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Parallel)->Args({16, 1})->Args({16, 2})->Args({16, 4})->Args({256, 0})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
