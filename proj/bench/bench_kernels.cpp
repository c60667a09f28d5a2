// Serial reference vs OpenMP kernels. Arg = worker count for the parallel runs.
#include <benchmark/benchmark.h>

#include "reenroll/simgen.hpp"

using namespace reenroll;

namespace {

void BM_OracleSerial(benchmark::State& state) {
  const SimConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(truth_oracle_serial(cfg, 1'000'000));
  state.SetItemsProcessed(state.iterations() * 1'000'000);
}
BENCHMARK(BM_OracleSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_OracleParallel(benchmark::State& state) {
  const SimConfig cfg;
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(truth_oracle(cfg, 1'000'000, workers));
  state.SetItemsProcessed(state.iterations() * 1'000'000);
}
BENCHMARK(BM_OracleParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

const TruthTable& small_truth() {
  static const TruthTable t = truth_oracle(SimConfig{}, 100'000);
  return t;
}

SimConfig rep_config() {
  SimConfig cfg;
  cfg.reps = 32;
  return cfg;
}

void BM_ReplicationsSerial(benchmark::State& state) {
  const auto cfg = rep_config();
  const auto cells = default_cells();
  const auto& truth = small_truth();
  for (auto _ : state) benchmark::DoNotOptimize(run_replications_serial(cfg, cells, truth));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.reps));
}
BENCHMARK(BM_ReplicationsSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_ReplicationsParallel(benchmark::State& state) {
  const auto cfg = rep_config();
  const auto cells = default_cells();
  const auto& truth = small_truth();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_replications(cfg, cells, truth, workers));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.reps));
}
BENCHMARK(BM_ReplicationsParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
