#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "psno/operators.hpp"
#include "psno/time_grid.hpp"

namespace {

using namespace psno;
using namespace psno::operators;

const std::vector<double>& coarse_query() {
  static const std::vector<double> q = uniform_grid(0.3, 0.1, 29);
  return q;
}

const std::vector<double>& fine_query() {
  static const std::vector<double> q = uniform_grid(0.3, 5e-5, 56001);
  return q;
}

void BM_PredictCoarse(benchmark::State& state) {
  const auto kind = static_cast<ModelKind>(state.range(0));
  const auto model = make_model(kind, default_config(kind), bench::stats(), 1);
  const Tensor input = bench::input_window(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_normalized(input, 0.0, 0.1, coarse_query()).data());
  }
}
BENCHMARK(BM_PredictCoarse)
    ->Arg(static_cast<int>(ModelKind::DeepONet))
    ->Arg(static_cast<int>(ModelKind::Fno))
    ->Arg(static_cast<int>(ModelKind::LnodeFixed))
    ->Arg(static_cast<int>(ModelKind::LnodeAdaptive));

void BM_PredictFine(benchmark::State& state) {
  const auto kind = static_cast<ModelKind>(state.range(0));
  const auto model = make_model(kind, default_config(kind), bench::stats(), 1);
  const Tensor input = bench::input_window(2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_normalized(input, 0.0, 0.1, fine_query()).data());
  }
}
BENCHMARK(BM_PredictFine)
    ->Arg(static_cast<int>(ModelKind::DeepONet))
    ->Arg(static_cast<int>(ModelKind::Fno))
    ->Arg(static_cast<int>(ModelKind::LnodeAdaptive))
    ->Unit(benchmark::kMillisecond);

}  // namespace
