#include <benchmark/benchmark.h>

#include <random>

#include "dcgm/bench.hpp"
#include "dcgm/model.hpp"
#include "dcgm/sdp.hpp"
#include "dcgm/synth.hpp"

namespace {

using namespace dcgm;

SynthDataset grid(std::size_t rows, std::size_t cols) {
  SynthConfig cfg;
  cfg.rows = rows;
  cfg.cols = cols;
  cfg.outlier_ratio = 0.3;
  cfg.group_size = 3;
  cfg.seed = 1;
  return generate_grid(cfg);
}

void BM_ProjectPsd(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = g(rng);
  const Matrix s = 0.5 * (a + a.transpose());
  for (auto _ : state) benchmark::DoNotOptimize(project_psd(s));
}
BENCHMARK(BM_ProjectPsd)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_BuildProblem(benchmark::State& state) {
  const auto d = grid(static_cast<std::size_t>(state.range(0)), 6);
  const auto params = thresholds_from_sigmas(0.1, 0.01, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(build_problem(d.graph, params));
}
BENCHMARK(BM_BuildProblem)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_SolveSdp(benchmark::State& state) {
  const auto d = grid(2, 4);
  const auto problem = build_problem(d.graph, thresholds_from_sigmas(0.1, 0.01, 1.0));
  SdpOptions opts;
  opts.tol_feas = 1e-5;
  opts.tol_obj = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(solve_sdp(problem, opts));
}
BENCHMARK(BM_SolveSdp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
