// Serial-vs-OpenMP kernel benchmark, plus one end-to-end training step.
// Build with -Dbenchmark via the clhpo_bench target; not part of ctest.

#include <benchmark/benchmark.h>

#include "clhpo/kernels.hpp"
#include "clhpo/methods.hpp"
#include "clhpo/mlp.hpp"
#include "clhpo/rng.hpp"

using namespace clhpo;

namespace {

Mat random_mat(int r, int c, std::uint64_t seed) {
  Rng rng(seed);
  Mat m(r, c);
  for (double& x : m.v) x = rng.normal();
  return m;
}

void bench_matmul_nt_serial(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Mat a = random_mat(n, n, 1), b = random_mat(n, n, 2);
  Mat c(n, n);
  for (auto _ : state) {
    kernels::matmul_nt_serial(a, b, c);
    benchmark::DoNotOptimize(c.v.data());
  }
}

void bench_matmul_nt_omp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Mat a = random_mat(n, n, 1), b = random_mat(n, n, 2);
  Mat c(n, n);
  for (auto _ : state) {
    kernels::matmul_nt_omp(a, b, c);
    benchmark::DoNotOptimize(c.v.data());
  }
}

void bench_train_step(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  kernels::set_parallel_enabled(parallel);
  Rng rng(3);
  auto model = nn::init_mlp({32, 64, 10}, 7);
  std::vector<Example> batch(64);
  for (auto& ex : batch) {
    ex.label = static_cast<int>(rng.uniform_int(0, 9));
    ex.features.resize(32);
    for (double& x : ex.features) x = rng.normal();
  }
  for (auto _ : state) {
    const auto lg = nn::loss_and_grad(model, batch);
    nn::sgd_step(model, lg.grads, 0.01);
    benchmark::DoNotOptimize(model.weights[0].v.data());
  }
  kernels::set_parallel_enabled(true);
}

}  // namespace

BENCHMARK(bench_matmul_nt_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_matmul_nt_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_train_step)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
