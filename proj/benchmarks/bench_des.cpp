#include <benchmark/benchmark.h>

#include "sdem/sim_harness.hpp"

namespace {

void BM_DeadTimeDes(benchmark::State& state) {
  const auto arrivals = static_cast<std::uint64_t>(state.range(0));
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sdem::simulate_dead_time_fraction(2e5, 175e-9, sdem::DeadTimeModel::kParalyzable, arrivals, seed++));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DeadTimeDes)->Arg(1 << 16)->Arg(1 << 20)->Unit(benchmark::kMillisecond);

void BM_CountGate(benchmark::State& state) {
  auto s = sdem::scenario_preset("sde-oracle");
  sdem::VirtualLab lab(s, 1);
  lab.set_route(sdem::VirtualLab::Route::kDetector);
  lab.set_attenuators({31.0, 31.0, 31.0});
  lab.set_bias(0.5);
  for (auto _ : state) benchmark::DoNotOptimize(lab.count_gate(1.0));
}
BENCHMARK(BM_CountGate)->Unit(benchmark::kMillisecond);

}  // namespace
