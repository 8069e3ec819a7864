#include <benchmark/benchmark.h>

#include "rtk/driver.hpp"
#include "rtk/linop.hpp"
#include "rtk/truncation.hpp"

namespace {

using namespace rtk;

void BM_CsrMatvec(benchmark::State& state) {
  const auto n = static_cast<Index>(state.range(0));
  const CsrMatrix a = gen_sparse_spd(n, 0.05, 10.0, 1);
  const Vector x = gen_rhs(n, 2);
  Vector y(n);
  for (auto _ : state) {
    a.apply(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(a.nnz()));
}
BENCHMARK(BM_CsrMatvec)->Arg(200)->Arg(1000)->Arg(4000);

void BM_DenseMatvec(benchmark::State& state) {
  const auto n = static_cast<Index>(state.range(0));
  const DenseOperator a(gen_sparse_spd(n, 0.05, 10.0, 1).to_dense(), {.symmetric = true, .spd = true});
  const Vector x = gen_rhs(n, 2);
  Vector y(n);
  for (auto _ : state) {
    a.apply(x, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_DenseMatvec)->Arg(200)->Arg(1000);

void BM_CgSolve(benchmark::State& state) {
  const CsrMatrix a = gen_sparse_spd(500, 0.16, 10.0, 1);
  const Vector b = gen_rhs(500, 1);
  const Vector x0 = Vector::Zero(500);
  int iters = 0;
  for (auto _ : state) {
    const auto res = solve_deterministic(a, b, x0, Method::CG, 1e-8, 5000, {}, false);
    iters = res.iterations;
    benchmark::DoNotOptimize(res.x.data());
  }
  state.counters["iterations"] = iters;
}
BENCHMARK(BM_CgSolve)->Unit(benchmark::kMillisecond);

void BM_AsRandomizedSolve(benchmark::State& state) {
  const CsrMatrix a = gen_sparse_spd(500, 0.16, 10.0, 1);
  const Vector b = gen_rhs(500, 1);
  const Vector x0 = Vector::Zero(500);
  const EstimatorSpec est = AsConfig(static_cast<double>(state.range(0)) + 0.5);
  std::uint64_t trial = 0;
  for (auto _ : state) {
    Rng rng(7, trial_stream(7, trial++));
    const auto res = randomized_solve(a, b, x0, Method::CG, est, 1e-8, 5000, rng);
    benchmark::DoNotOptimize(res.estimate.data());
  }
}
BENCHMARK(BM_AsRandomizedSolve)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_ReplaySolve(benchmark::State& state) {
  const CsrMatrix a = gen_sparse_spd(500, 0.16, 10.0, 1);
  const Trajectory traj = record_trajectory(a, gen_rhs(500, 1), Vector::Zero(500), Method::CG, 1e-8, 5000);
  const EstimatorSpec est = AsConfig(100.5);
  std::uint64_t trial = 0;
  for (auto _ : state) {
    Rng rng(7, trial_stream(7, trial++));
    const auto res = replay_solve(traj, est, rng);
    benchmark::DoNotOptimize(res.estimate.data());
  }
}
BENCHMARK(BM_ReplaySolve);

void BM_PoolStep(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> t(4096);
  for (auto& x : t) x = rng.uniform();
  for (auto _ : state) {
    PoolState pool = PoolState::start(0, 1.0, 0.1);
    for (double x : t) {
      auto e = pool_step(pool, x);
      benchmark::DoNotOptimize(e);
    }
    auto last = pool_step(pool, std::nullopt);
    benchmark::DoNotOptimize(last);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.size()));
}
BENCHMARK(BM_PoolStep);

}  // namespace

BENCHMARK_MAIN();
