// Serial reference vs OpenMP kernels.
//
//   ./build/bench/barlab_bench --benchmark_filter=Gemm
//   OMP_NUM_THREADS=8 ./build/bench/barlab_bench

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "barlab/bars.hpp"
#include "barlab/ingest.hpp"
#include "barlab/kernels.hpp"

namespace {

std::vector<float> random_matrix(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Shapes follow the first MLP layer: batch x (20 * 30) times (20 * 30) x 256.
constexpr std::size_t kBatch = 1024, kIn = 600, kOut = 256;

void BM_GemmNN(benchmark::State& state) {
  const auto a = random_matrix(kBatch * kIn, 1);
  const auto b = random_matrix(kIn * kOut, 2);
  std::vector<float> c(kBatch * kOut);
  for (auto _ : state) {
    barlab::kernels::gemm_nn<float>(kBatch, kOut, kIn, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * kBatch * kIn * kOut,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_GemmNN)->Unit(benchmark::kMillisecond);

void BM_GemmNN_Reference(benchmark::State& state) {
  const auto a = random_matrix(kBatch * kIn, 1);
  const auto b = random_matrix(kIn * kOut, 2);
  std::vector<float> c(kBatch * kOut);
  for (auto _ : state) {
    barlab::kernels::reference::gemm_nn<float>(kBatch, kOut, kIn, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * kBatch * kIn * kOut,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_GemmNN_Reference)->Unit(benchmark::kMillisecond);

void BM_GemmNT(benchmark::State& state) {
  const auto a = random_matrix(kBatch * kOut, 3);
  const auto b = random_matrix(kIn * kOut, 4);
  std::vector<float> c(kBatch * kIn);
  for (auto _ : state) {
    barlab::kernels::gemm_nt<float>(kBatch, kIn, kOut, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * kBatch * kIn * kOut,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_GemmNT)->Unit(benchmark::kMillisecond);

void BM_GemmTN(benchmark::State& state) {
  const auto a = random_matrix(kBatch * kIn, 5);
  const auto b = random_matrix(kBatch * kOut, 6);
  std::vector<float> c(kIn * kOut);
  for (auto _ : state) {
    barlab::kernels::gemm_tn<float>(kIn, kOut, kBatch, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * kBatch * kIn * kOut,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_GemmTN)->Unit(benchmark::kMillisecond);

std::vector<barlab::TickPartition> bench_partitions() {
  barlab::SynthConfig cfg;
  cfg.symbols = 4;
  cfg.days = 4;
  barlab::SessionSpec session;
  std::vector<barlab::TickPartition> parts;
  for (int s = 0; s < cfg.symbols; ++s)
    for (int d = 0; d < cfg.days; ++d) parts.push_back(barlab::generate_partition(cfg, session, s, d));
  return parts;
}

void BM_BuildBars(benchmark::State& state) {
  const auto parts = bench_partitions();
  barlab::BarBuildConfig cfg;
  cfg.excluded_codes = {barlab::kOffExchangeCode};
  for (auto _ : state) benchmark::DoNotOptimize(barlab::build_all_bars(parts, cfg));
}
BENCHMARK(BM_BuildBars)->Unit(benchmark::kMillisecond);

void BM_BuildBars_Reference(benchmark::State& state) {
  const auto parts = bench_partitions();
  barlab::BarBuildConfig cfg;
  cfg.excluded_codes = {barlab::kOffExchangeCode};
  for (auto _ : state) benchmark::DoNotOptimize(barlab::reference::build_all_bars(parts, cfg));
}
BENCHMARK(BM_BuildBars_Reference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
