#include <benchmark/benchmark.h>

#include <vector>

#include "sdem/uncertainty.hpp"

namespace {

void BM_ChainPropagation(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::vector<sdem::UncertainValue> inputs;
  for (int i = 0; i < n; ++i) inputs.push_back(sdem::UncertainValue::lift(1.0 + 0.01 * i, 0.001));
  for (auto _ : state) {
    sdem::UncertainValue acc(1.0);
    for (const auto& x : inputs) acc = acc * x / (x + 1.0);
    benchmark::DoNotOptimize(acc.sigma());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_ChainPropagation)->RangeMultiplier(4)->Range(4, 256)->Complexity();

void BM_Covariance(benchmark::State& state) {
  std::vector<sdem::UncertainValue> base;
  for (int i = 0; i < 16; ++i) base.push_back(sdem::UncertainValue::lift(2.0 + i, 0.01));
  std::vector<sdem::UncertainValue> derived;
  for (int i = 0; i + 1 < 16; ++i) derived.push_back(base[i] * base[i + 1]);
  for (auto _ : state) benchmark::DoNotOptimize(sdem::covariance_matrix(derived));
}
BENCHMARK(BM_Covariance);

}  // namespace
