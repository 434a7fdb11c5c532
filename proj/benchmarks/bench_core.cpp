// Micro-benchmarks for the hot path: RK4 stepping, incremental tangent maps
// and the per-sample correlation accumulation (the cost driver of a response
// run is accumulate_sample * K).

#include "lyapresp/lorenz96.hpp"
#include "lyapresp/lyapunov.hpp"
#include "lyapresp/response.hpp"
#include "lyapresp/rk4.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace lyapresp;

const L96Params k_params{20, 8.0, 0.0, 1.0};

Vector spun_up_state(const System& sys, std::uint64_t seed) {
  Vector x = seeded_initial_state(sys.dimension(), seed);
  return advance(sys, std::move(x), 0.01, 100000);  // 1000 time units
}

void BM_Rk4Step(benchmark::State& state) {
  Lorenz96System sys(k_params);
  Vector x = spun_up_state(sys, 7);
  for (auto _ : state) {
    rk4_step(sys, 0.01, x);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_Rk4Step);

void BM_Rk4JointStep(benchmark::State& state) {
  Lorenz96System sys(k_params);
  Vector x = spun_up_state(sys, 7);
  Matrix v = Matrix::Ones(20, 1).normalized();
  for (auto _ : state) {
    rk4_joint_step(sys, 0.01, x, v);
    v /= v.norm();
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_Rk4JointStep);

void BM_IncrementalMap(benchmark::State& state) {
  Lorenz96System sys(k_params);
  Vector x = spun_up_state(sys, 7);
  for (auto _ : state) {
    auto map = incremental_map(sys, x, x, 0.01, 25);
    benchmark::DoNotOptimize(map.matrix.data());
  }
}
BENCHMARK(BM_IncrementalMap);

void BM_AccumulateSample(benchmark::State& state) {
  const int depth = static_cast<int>(state.range(0));
  Lorenz96System sys(k_params);
  Vector x = spun_up_state(sys, 7);
  Vector w = Vector::Ones(20).normalized();
  MapHistory history(depth, 20);
  for (int k = 0; k <= depth; ++k) {
    const Vector x_anchor = x;
    const auto map = incremental_map(sys, x_anchor, x, 0.01, 25, k);
    history.push(map, x_anchor, w);
    w = (map.matrix * w).normalized();
  }
  CorrelationGrid grid({20, depth, 0.25, EndpointMode::printed});
  const Vector& x_k = history.state_at(history.newest_index());
  const Vector& w_k = history.tangent_at(history.newest_index());
  for (auto _ : state) {
    accumulate_sample(grid, history, x_k, w_k, sys);
    grid.add_sample_count(1);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_AccumulateSample)->Arg(15)->Arg(30)->Arg(60);

}  // namespace

BENCHMARK_MAIN();
