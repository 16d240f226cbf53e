#include <doctest.h>

#include <cmath>
#include <vector>

#include "pipeline.hpp"
#include "sdem/errors.hpp"
#include "sdem/sde_analysis.hpp"
#include "sdem/sim_harness.hpp"

using namespace sdem;
using doctest::Approx;

namespace {

NonlinModel unit_model(double wavelength_nm) {
  NonlinModel m;
  m.wavelength_nm = wavelength_nm;
  m.tau = UncertainValue(0.5);
  RangeFit f;
  f.range = RangeSetting::from_dbm(-10);
  f.full_scale_w = f.range.full_scale_w();
  f.span_min_w = 1e-6;
  f.span_max_w = 1e-4;
  m.ranges[-10] = f;
  m.rf[-10] = UncertainValue(1.0);
  return m;
}

std::vector<CountRecord> gates(CountPhase ph, double bias, std::vector<std::int64_t> counts) {
  std::vector<CountRecord> out;
  int rep = 1;
  for (auto c : counts) out.push_back({bias, ph, c, rep++, 1.0});
  return out;
}

}  // namespace

TEST_CASE("pile-up bound") {
  CHECK(pileup_max_sde(0.0, 175e-9) == 1.0);
  CHECK(pileup_max_sde(0.0, 175e-9, DeadTimeModel::kNonParalyzable) == 1.0);
  CHECK(pileup_max_sde(2e5, 175e-9) == Approx(std::exp(-0.035)).epsilon(1e-15));
  CHECK(pileup_max_sde(2e5, 175e-9) == Approx(0.965605).epsilon(1e-6));
  CHECK(pileup_max_sde(2e5, 175e-9, DeadTimeModel::kNonParalyzable) == Approx(0.966184).epsilon(1e-6));
  for (double rate : {1e3, 1e5, 2e5, 1e6, 1e7}) {
    CHECK(pileup_max_sde(rate, 175e-9) <= pileup_max_sde(rate, 175e-9, DeadTimeModel::kNonParalyzable));
  }
  CHECK(pileup_max_sde(1e-3, 175e-9) == Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(pileup_max_sde(-1.0, 175e-9), InvalidArgument);
  CHECK(dead_time_model_from_string(to_string(DeadTimeModel::kNonParalyzable)) == DeadTimeModel::kNonParalyzable);
}

TEST_CASE("photon rate") {
  const double e = photon_energy_j(1550.0);
  CHECK(e == Approx(1.2815e-19).epsilon(1e-4));
  auto one = UncertainValue(1.0);
  auto f = photon_rate(UncertainValue(e), one, one, one, 1550.0);
  CHECK(f.rate.value() == Approx(1.0).epsilon(1e-14));

  const double a = std::pow(10.0, -3.1);
  auto g = photon_rate(UncertainValue(100e-6), UncertainValue(a), UncertainValue(a), UncertainValue(a), 1550.0);
  const double h = 6.62607015e-34, c = 299792458.0;
  CHECK(g.rate.value() == Approx(100e-6 * std::pow(10.0, -9.3) * 1550e-9 / (h * c)).epsilon(1e-12));
  CHECK(g.rate.value() == Approx(3.91e5).epsilon(1e-3));

  CHECK_THROWS_AS(photon_rate(UncertainValue(0.0), one, one, one, 1550.0), InvalidArgument);
  CHECK_THROWS_AS(photon_rate(UncertainValue(1e-6), UncertainValue(-1.0), one, one, 1550.0), InvalidArgument);
}

TEST_CASE("photon rate is linear in P_DP") {
  auto a = UncertainValue(1e-3);
  const double r1 = photon_rate(UncertainValue(1e-5), a, a, a, 1550.0).rate.value();
  const double r3 = photon_rate(UncertainValue(3e-5), a, a, a, 1550.0).rate.value();
  CHECK(r3 / r1 == Approx(3.0).epsilon(1e-14));
}

TEST_CASE("detector-port power with unit corrections") {
  auto m = unit_model(1550.0);
  SwitchRatio sw;
  sw.wavelength_nm = 1550.0;
  sw.ratio = UncertainValue(1.0);
  CpmCalibration cpm;
  cpm.set(1550.0, UncertainValue(1.0));
  auto v = UncertainValue::lift(5e-5, 5e-8);
  auto p = detector_port_power(v, m, RangeSetting::from_dbm(-10), sw, cpm);
  CHECK(p.value() == Approx(5e-5).epsilon(1e-14));
  CHECK(p.sigma() == Approx(5e-8).epsilon(1e-12));

  sw.ratio = UncertainValue(0.98);
  auto fwd = detector_port_power(v, m, RangeSetting::from_dbm(-10), sw, cpm);
  auto legacy = detector_port_power(v, m, RangeSetting::from_dbm(-10), sw, cpm, PowerOrientation::kLegacyDivide);
  CHECK(fwd.value() == Approx(0.98 * 5e-5));
  CHECK(legacy.value() == Approx(5e-5 / 0.98));

  sw.wavelength_nm = 1310.0;
  CHECK_THROWS_AS(detector_port_power(v, m, RangeSetting::from_dbm(-10), sw, cpm), DataError);
}

TEST_CASE("simulated detector-port power") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = scenario_preset("sde-oracle");
    s.seed = seed;
    s.switch_detector = 0.98 * s.switch_monitor;
    s.cpm.cf_certificate = 1.01;
    SimulateOptions o;
    o.polscan = false;
    o.stability = false;
    auto b = simulate_session(s, o);
    auto r = testing::analyze_bundle(b);
    const double truth = b.truth.at("sde").at("p_dp_w").get<double>();
    CHECK(std::abs(r.flux.p_dp.value() / truth - 1.0) < 3e-3);
  }
}

TEST_CASE("mean count rate") {
  auto rec = gates(CountPhase::kMaxPol, 0.5, {100, 110, 90, 100});
  auto r = mean_count_rate(rec, CountPhase::kMaxPol);
  REQUIRE(r.size() == 1);
  CHECK(r[0].gates == 4);
  CHECK(r[0].rate.value() == Approx(100.0));
  const double poisson = 100.0 / 4.0;
  const double numerical = (0.0 + 100.0 + 100.0 + 0.0) / 3.0 / 4.0;
  CHECK(r[0].rate.sigma() == Approx(std::sqrt(poisson + numerical)));
  CHECK(mean_count_rate(rec, CountPhase::kDark).empty());
  auto neg = gates(CountPhase::kDark, 0.5, {-1});
  CHECK_THROWS_AS(mean_count_rate(neg, CountPhase::kDark), DataError);
}

TEST_CASE("net count rate") {
  auto zeros = gates(CountPhase::kDark, 0.1, {0, 0, 0});
  auto light = mean_count_rate(zeros, CountPhase::kDark);
  auto net = net_count_rate(light, light);
  REQUIRE(net.size() == 1);
  CHECK(net[0].rate.value() == 0.0);
  CHECK(net[0].rate.sigma() == 0.0);

  auto a = mean_count_rate(gates(CountPhase::kMaxPol, 0.1, {5}), CountPhase::kMaxPol);
  auto b = mean_count_rate(gates(CountPhase::kDark, 0.2, {5}), CountPhase::kDark);
  CHECK_THROWS_AS(net_count_rate(a, b), DataError);
  std::vector<RateAtBias> none;
  CHECK_THROWS_AS(net_count_rate(a, none), DataError);
}

TEST_CASE("net rate covers the simulated truth") {
  int inside = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto s = scenario_preset("sde-oracle");
    s.seed = seed;
    s.detector.sde_plateau = 0.95;
    s.detector.i_sat_a = 2.0e-6;
    s.detector.width_a = 0.2e-6;
    s.detector.dead_time_s = 0.0;
    VirtualLab lab(s, 0);
    lab.set_attenuators({31.0, 31.0, 31.0});
    lab.set_bias(0.5);
    lab.set_polarization(s.detector.pol_axis);
    std::vector<CountRecord> rec;
    lab.set_route(VirtualLab::Route::kMonitor);
    const double dark_truth = lab.detection_rate();
    for (int i = 1; i <= 10; ++i) rec.push_back({0.5, CountPhase::kDark, lab.count_gate(1.0), i, 1.0});
    lab.set_route(VirtualLab::Route::kDetector);
    const double net_truth = lab.detection_rate() - dark_truth;
    for (int i = 1; i <= 10; ++i) rec.push_back({0.5, CountPhase::kMaxPol, lab.count_gate(1.0), i, 1.0});
    if (seed == 1) {
      CHECK(dark_truth == Approx(1e4).epsilon(1e-6));
      CHECK(net_truth / 0.95 == Approx(2e5).epsilon(0.01));
    }
    auto net = net_count_rate(mean_count_rate(rec, CountPhase::kMaxPol), mean_count_rate(rec, CountPhase::kDark));
    inside += std::abs(net[0].rate.value() - net_truth) <= 2.0 * net[0].rate.sigma();
  }
  CHECK(inside >= 93);
}

TEST_CASE("SDE estimate") {
  auto one = UncertainValue(1.0);
  auto flux = photon_rate(UncertainValue(photon_energy_j(1550.0) * 2e5), one, one, one, 1550.0);
  auto sde = sde_estimate(UncertainValue(flux.rate.value()), flux);
  CHECK(sde.value() == Approx(1.0).epsilon(1e-14));
  CHECK(sde.sigma() == 0.0);
}

TEST_CASE("relative variance decomposes over independent inputs") {
  const double e = photon_energy_j(1550.0);
  auto p = UncertainValue::lift(5e-5, 5e-5 * 0.0023);
  auto a1 = UncertainValue::lift(7.9e-4, 7.9e-4 * 0.002);
  auto a2 = UncertainValue::lift(8.0e-4, 8.0e-4 * 0.0021);
  auto a3 = UncertainValue::lift(9.0e-4, 9.0e-4 * 0.0019);
  auto net = UncertainValue::lift(2.0e5, 220.0);
  auto flux = photon_rate(p, a1, a2, a3, 1550.0);
  auto sde = sde_estimate(net, flux);
  double sum = 0.0;
  for (const auto& x : {p, a1, a2, a3, net}) sum += x.relative_sigma() * x.relative_sigma();
  CHECK(sde.relative_sigma() * sde.relative_sigma() == Approx(sum).epsilon(1e-9));
  CHECK(sde.value() == Approx(2.0e5 * e / (5e-5 * 7.9e-4 * 8.0e-4 * 9.0e-4)).epsilon(1e-13));
}

TEST_CASE("error budget from the table inputs") {
  BudgetInputs in;
  auto b = compose_error_budget(in);
  CHECK(b.p_dp == Approx(std::sqrt(0.0014 * 0.0014 * 2 + 0.00075 * 0.00075 + 0.001 * 0.001)).epsilon(1e-9));
  const double table = 0.0014 * 0.0014 * 2 + 0.00075 * 0.00075 + 3 * 0.002 * 0.002 + 0.001 * 0.001;
  const double light_var = 2.0 * 2.3e5 / 10.0;
  const double dark_var = 2.0 * 1e4 / 10.0;
  const double counting = std::sqrt(light_var + dark_var) / 2.2e5;
  CHECK(b.counting == Approx(counting).epsilon(1e-9));
  CHECK(b.total == Approx(std::sqrt(table + counting * counting)).epsilon(1e-9));
  CHECK(b.total >= 0.0042);
  CHECK(b.total <= 0.0050);

  BudgetInputs low = in;
  low.light_rate_cps = 1e5;
  BudgetInputs high = in;
  high.light_rate_cps = 2e5;
  CHECK(compose_error_budget(low).total > compose_error_budget(high).total);

  in.gates = 0;
  CHECK_THROWS_AS(compose_error_budget(in), InvalidArgument);
}

TEST_CASE("missing phases are listed") {
  auto s = scenario_preset("sde-oracle");
  SimulateOptions o;
  o.polscan = false;
  o.stability = false;
  auto b = simulate_session(s, o);
  auto session = testing::sde_session_of(b);
  std::erase_if(session.counts, [](const CountRecord& r) { return r.phase == CountPhase::kMinPol; });
  session.atten.pop_back();
  try {
    (void)sde_curve(session, testing::calibrate_bundle(b));
    FAIL("expected an incomplete-session error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("minpol") != std::string::npos);
    CHECK(msg.find("attenuator 3") != std::string::npos);
    CHECK(msg.find("maxpol") == std::string::npos);
  }
}

TEST_CASE("saturated curve is flat") {
  auto s = scenario_preset("sde-oracle");
  s.detector.i_sat_a = 1.5e-6;
  s.detector.width_a = 0.1e-6;
  SimulateOptions o;
  o.polscan = false;
  o.stability = false;
  auto b = simulate_session(s, o);
  auto r = testing::analyze_bundle(b);
  const auto& pts = r.curves.at(CountPhase::kMaxPol);
  std::vector<const SdePoint*> plateau;
  for (const auto& p : pts)
    if (p.bias_current_a >= 3.0e-6) plateau.push_back(&p);
  REQUIRE(plateau.size() >= 5);
  double m = 0.0;
  for (auto* p : plateau) m += p->sde.value();
  m /= static_cast<double>(plateau.size());
  int inside = 0;
  for (auto* p : plateau) {
    // Shared calibration terms move every point together; only counting noise separates them.
    inside += std::abs(p->sde.value() - m) <= 3.0 * p->net_rate.relative_sigma() * p->sde.value();
  }
  CHECK(inside == static_cast<int>(plateau.size()));
}

TEST_CASE("recovered SDE budget matches the recorded rows") {
  auto s = scenario_preset("sde-oracle");
  SimulateOptions o;
  o.polscan = false;
  o.stability = false;
  auto b = simulate_session(s, o);
  auto r = testing::analyze_bundle(b);
  auto bd = r.budget(CountPhase::kMaxPol, 0.5);
  CHECK(bd.total == Approx(testing::point_at(r, CountPhase::kMaxPol, 0.5).sde.relative_sigma()));
  CHECK(bd.total > 0.0);
  CHECK(bd.cf_cpm == Approx(0.0014).epsilon(1e-9));
  CHECK(r.pileup_bound == Approx(pileup_max_sde(r.flux.rate.value(), 175e-9)));
  CHECK_THROWS_AS(SdeResult{}.budget(CountPhase::kMaxPol, 0.5), DataError);
}
