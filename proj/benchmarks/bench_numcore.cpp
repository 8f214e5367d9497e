#include <benchmark/benchmark.h>

#include "psno/autodiff.hpp"
#include "psno/fft.hpp"
#include "psno/nn.hpp"
#include "psno/rng.hpp"

namespace {

using namespace psno;

std::vector<double> random_signal(std::size_t n) {
  Pcg64 rng(n, 3);
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  return x;
}

void BM_Rfft(benchmark::State& state) {
  const auto x = random_signal(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fft::rfft(x).data());
  }
}
BENCHMARK(BM_Rfft)->Arg(29)->Arg(4096)->Arg(56001);

void BM_RfftTruncated(benchmark::State& state) {
  const auto x = random_signal(static_cast<std::size_t>(state.range(0)));
  std::vector<fft::cplx> modes(14);
  for (auto _ : state) {
    fft::rfft_truncated(x, 14, modes.data());
    benchmark::DoNotOptimize(modes.data());
  }
}
BENCHMARK(BM_RfftTruncated)->Arg(29)->Arg(56001);

void BM_AffineForwardBackward(benchmark::State& state) {
  const std::size_t batch = 64, in = 512, out = 512;
  Pcg64 rng(7, 1);
  Tensor x({batch, in});
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  std::vector<numcore::ParamSpec> specs;
  numcore::add_mlp_specs(specs, "l", {in, out});
  const auto params = numcore::init_params(specs, 1);
  for (auto _ : state) {
    numcore::Tape tape;
    const auto w = tape.leaf(params.at("l.0.w"));
    const auto b = tape.leaf(params.at("l.0.b"));
    const auto y = tape.affine(tape.constant(x), w, b);
    const auto loss = tape.sum_sq(y);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(w).data());
  }
  state.SetItemsProcessed(state.iterations() * batch * in * out);
}
BENCHMARK(BM_AffineForwardBackward);

void BM_SpectralConvBatch(benchmark::State& state) {
  const std::size_t batch = 64, n = 29, w = 80, m = 14;
  Pcg64 rng(9, 1);
  Tensor x({batch, n, w});
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  Tensor wt({m, w, w, 2});
  for (double& v : wt.values()) v = rng.uniform(-0.01, 0.01);
  for (auto _ : state) {
    numcore::Tape tape;
    const auto y = tape.spectral_conv(tape.constant(x), tape.leaf(wt));
    const auto loss = tape.sum_sq(y);
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.value(y).data());
  }
}
BENCHMARK(BM_SpectralConvBatch);

}  // namespace
