// PB layer and residual block forward/backward cost, taped and untaped.

#include <benchmark/benchmark.h>

#include "fhrr/layers.hpp"

namespace {

using namespace fhrr;

void BM_PBLayerForward(benchmark::State& state) {
  const Index n = state.range(0);
  Rng rng(2);
  nn::PBLayer layer("pb", n, n, rng);
  const SymbolBatch a = random_symbols(rng, 64, n);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(a));
}

void BM_ResidualBlockBackward(benchmark::State& state) {
  const Index n = state.range(0);
  Rng rng(3);
  nn::ResidualBlock block("res", n, rng);
  const Matrix a = random_symbols(rng, 64, n).phases();
  auto params = block.parameters();
  ad::Gradient grad(params);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var y = block.forward(tape, tape.constant(a));
    tape.backward(tape.sum(tape.row_similarity(y, tape.constant(a))), grad);
    benchmark::DoNotOptimize(grad);
  }
}

BENCHMARK(BM_PBLayerForward)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ResidualBlockBackward)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace
