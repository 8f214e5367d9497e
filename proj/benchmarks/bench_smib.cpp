#include <benchmark/benchmark.h>

#include "psno/datagen.hpp"
#include "psno/smib.hpp"
#include "psno/time_grid.hpp"

namespace {

using namespace psno;

void BM_SolveFullHorizon(benchmark::State& state) {
  smib::SmibParams p;
  p.Pm = 0.4;
  p.D = 0.05;
  p.Pm1 = 1.3;
  const double d0 = smib::equilibrium_angle(p.Pm, smib::max_power(p));
  for (auto _ : state) {
    const auto sol = smib::solve(p, smib::MachineState{d0, 0.0}, 0.0, 3.1);
    benchmark::DoNotOptimize(sol.step_count());
  }
}
BENCHMARK(BM_SolveFullHorizon);

void BM_DenseSampling(benchmark::State& state) {
  smib::SmibParams p;
  p.Pm = 0.4;
  p.Pm1 = 1.3;
  const double d0 = smib::equilibrium_angle(p.Pm, smib::max_power(p));
  const auto sol = smib::solve(p, smib::MachineState{d0, 0.0}, 0.0, 3.1);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const double dt = n == 62001 ? 5e-5 : 1e-3;
  for (auto _ : state) {
    const auto traj = sol.sample(0.0, dt, n);
    benchmark::DoNotOptimize(traj.delta.data());
  }
}
BENCHMARK(BM_DenseSampling)->Arg(3101)->Arg(62001);

void BM_InstabilityBisection(benchmark::State& state) {
  smib::SmibParams p;
  p.Pm = 0.4;
  p.D = 0.05;
  for (auto _ : state) {
    benchmark::DoNotOptimize(smib::instability_lower_bound(p));
  }
}
BENCHMARK(BM_InstabilityBisection);

void BM_SampleUnstableRecord(benchmark::State& state) {
  datagen::SamplingConfig cfg;
  cfg.unstable_fraction = 1.0;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Pcg64 rng(1, record_stream(0, i++));
    benchmark::DoNotOptimize(datagen::sample_unstable(rng, cfg).params.Pm1);
  }
}
BENCHMARK(BM_SampleUnstableRecord);

}  // namespace

BENCHMARK_MAIN();
