#include <benchmark/benchmark.h>

#include "sdem/nonlin_cal.hpp"
#include "sdem/session_io.hpp"
#include "sdem/sim_harness.hpp"

namespace {

void BM_NonlinFit(benchmark::State& state) {
  auto s = sdem::scenario_preset("sde-oracle");
  const auto records = sdem::nonlin_records(sdem::run_nonlin_acquisition(s, s.wavelength_nm).nonlin);
  for (auto _ : state) {
    auto m = sdem::range_discontinuity(sdem::fit_nonlinearity(records), records);
    benchmark::DoNotOptimize(m.tau);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(records.size()));
}
BENCHMARK(BM_NonlinFit)->Unit(benchmark::kMillisecond);

void BM_NonlinAcquisition(benchmark::State& state) {
  auto s = sdem::scenario_preset("sde-oracle");
  for (auto _ : state) {
    auto b = sdem::run_nonlin_acquisition(s, s.wavelength_nm);
    benchmark::DoNotOptimize(b.nonlin.data());
  }
}
BENCHMARK(BM_NonlinAcquisition)->Unit(benchmark::kMillisecond);

}  // namespace
