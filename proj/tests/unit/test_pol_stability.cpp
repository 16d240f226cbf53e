#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sdem/errors.hpp"
#include "sdem/pol_stability.hpp"
#include "sdem/sim_harness.hpp"

using namespace sdem;
using doctest::Approx;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.steps = 4;
  return g;
}

std::vector<PolGridRecord> flat_grid(const GridSpec& spec, std::int64_t counts, double t = 1.0) {
  std::vector<PolGridRecord> out;
  for (int i = 0; i < spec.steps; ++i) {
    for (int j = 0; j < spec.steps; ++j) {
      PolGridRecord r;
      r.qwp_deg = spec.qwp_angle(i);
      r.hwp_deg = spec.hwp_angle(j);
      r.counts = {counts, counts};
      r.cpm_w = 1e-6 * t;
      r.mpm_w = 1e-6;
      out.push_back(r);
    }
  }
  return out;
}

StabilitySeries white_series(std::size_t n, double rate_hz, double rel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, rel);
  StabilitySeries s;
  s.sample_rate_hz = rate_hz;
  for (std::size_t i = 0; i < n; ++i) s.readings_w.push_back(1e-4 * (1.0 + g(rng)));
  return s;
}

}  // namespace

TEST_CASE("uniform transmission leaves the grid unchanged") {
  auto spec = small_grid();
  auto grid = flat_grid(spec, 1000);
  grid[5].counts = {1200, 1300};
  auto c = transmission_correct(grid, UncertainValue(0.0), spec);
  REQUIRE(c.size() == grid.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    CHECK(c[k].transmission == 1.0);
    CHECK(c[k].rate.value() == c[k].raw_rate.value());
  }
  CHECK(c[5].rate.value() == Approx(1250.0));
}

TEST_CASE("dark subtraction uses the point's own dark gate first") {
  auto spec = small_grid();
  auto grid = flat_grid(spec, 1000);
  grid[0].dark_counts = 100;
  auto c = transmission_correct(grid, UncertainValue::lift(50.0, 5.0), spec);
  CHECK(c[0].raw_rate.value() == Approx(900.0));
  CHECK(c[1].raw_rate.value() == Approx(950.0));
}

TEST_CASE("constant grid has PS = 1") {
  auto spec = small_grid();
  auto c = transmission_correct(flat_grid(spec, 5000), UncertainValue(0.0), spec);
  auto r = polarization_sensitivity(c);
  CHECK(r.ps.value() == 1.0);
}

TEST_CASE("PS is at least 1 and scale invariant") {
  auto spec = small_grid();
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> counts(1000, 2000);
  std::uniform_real_distribution<double> trans(0.97, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto grid = flat_grid(spec, 0);
    for (auto& p : grid) {
      p.counts = {counts(rng), counts(rng)};
      p.cpm_w = 1e-6 * trans(rng);
    }
    auto scaled = grid;
    for (auto& p : scaled) {
      for (auto& c : p.counts) c *= 3;
      p.cpm_w *= 7.0;
      p.mpm_w *= 7.0;
    }
    auto a = polarization_sensitivity(transmission_correct(grid, UncertainValue(0.0), spec));
    auto b = polarization_sensitivity(transmission_correct(scaled, UncertainValue(0.0), spec));
    CHECK(a.ps.value() >= 1.0);
    CHECK(b.ps.value() == Approx(a.ps.value()).epsilon(1e-12));
    CHECK(a.argmax == b.argmax);
    CHECK(a.argmin == b.argmin);
  }
}

TEST_CASE("degenerate grid") {
  auto spec = small_grid();
  auto grid = flat_grid(spec, 1000);
  grid[3].counts = {0, 0};
  auto c = transmission_correct(grid, UncertainValue(0.0), spec);
  CHECK_THROWS_AS(polarization_sensitivity(c), DomainError);
  CHECK_THROWS_AS(polarization_sensitivity(std::vector<CorrectedPoint>{}), DataError);
}

TEST_CASE("incomplete grid names the missing point") {
  auto spec = small_grid();
  auto grid = flat_grid(spec, 1000);
  grid.erase(grid.begin() + 6);  // i = 1, j = 2
  try {
    validate_grid(grid, spec);
    FAIL("expected an incomplete-grid error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("45") != std::string::npos);  // qwp 180 * 1 / 4
    CHECK(msg.find("45") != msg.rfind("45"));    // hwp 90 * 2 / 4
  }
  auto bad = flat_grid(spec, 1000);
  bad[2].mpm_w = 0.0;
  CHECK_THROWS_AS(validate_grid(bad, spec), DataError);
  auto outside = flat_grid(spec, 1000);
  outside[0].qwp_deg = 200.0;
  CHECK_THROWS_AS(validate_grid(outside, spec), DataError);
}

TEST_CASE("transmission ripple is removed") {
  auto s = scenario_preset("polscan-oracle");
  s.detector.ps = 1.0;
  s.controller.transmission_ripple = 0.02;
  s.polscan.gates = 10;
  auto b = run_polscan(s, s.polscan.grid);
  auto c = transmission_correct(b.polscan, UncertainValue(0.0), s.polscan.grid);
  double raw_lo = 1e300, raw_hi = 0, sum = 0;
  for (const auto& p : c) {
    raw_lo = std::min(raw_lo, p.raw_rate.value());
    raw_hi = std::max(raw_hi, p.raw_rate.value());
    sum += p.rate.value();
  }
  const double m = sum / static_cast<double>(c.size());
  double chi2 = 0;
  for (const auto& p : c) chi2 += std::pow((p.rate.value() - m) / p.rate.sigma(), 2);
  // Raw grid shows the ripple, corrected grid scatters like counting noise.
  CHECK(raw_hi / raw_lo > 1.015);
  const double dof = static_cast<double>(c.size() - 1);
  CHECK(chi2 / dof < 1.0 + 4.0 * std::sqrt(2.0 / dof));
}

TEST_CASE("Allan deviation of a constant series is zero") {
  StabilitySeries s;
  s.sample_rate_hz = 4.118;
  s.readings_w.assign(2000, 1e-4);
  std::vector<double> taus{1.0, 10.0, 100.0};
  for (auto [tau, adev] : allan_deviation(s, taus)) CHECK(adev == 0.0);
}

TEST_CASE("Allan deviation rejects taus out of range") {
  StabilitySeries s;
  s.sample_rate_hz = 4.118;
  s.readings_w.assign(1000, 1e-4);
  for (double bad : {0.1, 1000.0}) {
    std::vector<double> t{bad};
    CHECK_THROWS_AS(allan_deviation(s, t), InvalidArgument);
  }
}

TEST_CASE("white noise falls as tau^-1/2") {
  auto s = white_series(14825, 4.118, 1e-3, 17);
  std::vector<double> taus{1, 2, 5, 10};
  auto ad = allan_deviation(s, taus);
  CHECK(log_log_slope(ad) == Approx(-0.5).epsilon(0.1));
  // For white noise ADEV(tau) = sigma / sqrt(m).
  CHECK(ad[0].second == Approx(1e-3 / std::sqrt(std::round(4.118))).epsilon(0.1));
}

TEST_CASE("stability series from timestamps") {
  std::vector<double> t, p;
  for (int i = 0; i < 100; ++i) {
    t.push_back(i / 4.118);
    p.push_back(1e-4);
  }
  auto s = make_stability_series(t, p);
  CHECK(s.sample_rate_hz == Approx(4.118).epsilon(1e-9));
  CHECK(s.readings_w.size() == 100);
  auto gap = t;
  for (std::size_t i = 50; i < gap.size(); ++i) gap[i] += 1.0;
  CHECK_THROWS_AS(make_stability_series(gap, p), DataError);
  std::vector<double> one{0.0};
  CHECK_THROWS_AS(make_stability_series(one, one), DataError);
}

TEST_CASE("appending a series averages down white noise") {
  auto a = white_series(4000, 4.118, 1e-3, 1);
  auto b = white_series(4000, 4.118, 1e-3, 2);
  StabilitySeries joined = a;
  joined.readings_w.insert(joined.readings_w.end(), b.readings_w.begin(), b.readings_w.end());
  std::vector<double> taus{100.0, 500.0};
  auto ad = allan_deviation(joined, taus);
  CHECK_NOTHROW(allan_deviation(joined, std::vector<double>{600.0}));
  CHECK_THROWS_AS(allan_deviation(a, std::vector<double>{600.0}), InvalidArgument);
  CHECK(ad[1].second < ad[0].second);
}
