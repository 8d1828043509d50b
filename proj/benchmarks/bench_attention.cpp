// Forward time of self- vs cross-attention as the input count m grows.

#include <benchmark/benchmark.h>

#include "fhrr/layers.hpp"

namespace {

using namespace fhrr;

constexpr Index kDim = 256;
constexpr Index kQueries = 32;

void BM_SelfAttention(benchmark::State& state) {
  const Index m = state.range(0);
  Rng rng(1);
  nn::SelfAttentionModule module("self", kDim, rng);
  const SymbolBatch a = random_symbols(rng, m, kDim);
  for (auto _ : state) benchmark::DoNotOptimize(module.forward(a));
  state.counters["score_entries"] = static_cast<double>(nn::SelfAttentionModule::score_entries(m));
  state.SetComplexityN(m);
}

void BM_CrossAttention(benchmark::State& state) {
  const Index m = state.range(0);
  Rng rng(1);
  nn::CrossAttentionModule module("cross", kDim, kQueries, rng);
  const SymbolBatch a = random_symbols(rng, m, kDim);
  for (auto _ : state) benchmark::DoNotOptimize(module.forward(a));
  state.counters["score_entries"] = static_cast<double>(module.score_entries(m));
  state.SetComplexityN(m);
}

BENCHMARK(BM_SelfAttention)->RangeMultiplier(2)->Range(32, 1024)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_CrossAttention)->RangeMultiplier(2)->Range(32, 2048)->Unit(benchmark::kMillisecond)->Complexity();

}  // namespace
BENCHMARK_MAIN();
