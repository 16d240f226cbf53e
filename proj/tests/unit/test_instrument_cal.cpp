#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "pipeline.hpp"
#include "sdem/errors.hpp"
#include "sdem/instrument_cal.hpp"
#include "sdem/sim_harness.hpp"

using namespace sdem;
using doctest::Approx;

namespace {

NonlinModel fitted_model(const SimScenario& s) {
  return testing::fit_bundle_nonlin(run_nonlin_acquisition(s, s.wavelength_nm));
}

std::vector<double> offset_corrected(VirtualLab& lab, int n) {
  lab.set_route(VirtualLab::Route::kDetector);
  std::vector<double> off;
  for (int i = 0; i < n; ++i) off.push_back(lab.mpm_read());
  lab.set_route(VirtualLab::Route::kMonitor);
  const double mean_off = std::accumulate(off.begin(), off.end(), 0.0) / n;
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lab.mpm_read() - mean_off);
  return v;
}

}  // namespace

TEST_CASE("identical routes give a unit switch ratio") {
  SwitchCalRecord rec;
  rec.wavelength_nm = 1550.0;
  rec.cpm_readings = {1.00e-5, 1.01e-5, 0.99e-5, 1.00e-5};
  rec.mpm_readings = rec.cpm_readings;
  auto sw = switching_ratio(rec);
  CHECK(sw.ratio.value() == Approx(1.0));
  // The two lists are separate measurements even when equal.
  auto se = mean_reading(rec.cpm_readings);
  CHECK(sw.ratio.relative_sigma() == Approx(std::sqrt(2.0) * se.relative_sigma()));
}

TEST_CASE("switch ratio errors and floor") {
  SwitchCalRecord rec;
  rec.wavelength_nm = 1550.0;
  rec.cpm_readings = {1.0, 1.0, 1.0};
  rec.mpm_readings = {};
  CHECK_THROWS_AS(switching_ratio(rec), DataError);
  rec.mpm_readings = {1.0, 1.06, 1.0};
  try {
    (void)switching_ratio(rec);
    FAIL("expected an unstable-source error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("unstable") != std::string::npos);
  }
  rec.mpm_readings = {2.0, 2.0, 2.0};
  SwitchRatioOptions o;
  o.min_relative_sigma = 0.0014;
  auto sw = switching_ratio(rec, o);
  CHECK(sw.ratio.value() == Approx(0.5));
  CHECK(sw.ratio.relative_sigma() == Approx(0.0014));
}

TEST_CASE("simulated switch ratio reproduces the reading-level truth") {
  auto s = scenario_preset("sde-oracle");
  s.switch_detector = 0.98 * s.switch_monitor;
  s.cpm.cf_certificate = 1.01;
  s.cpm.perturb_cf = false;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    s.seed = seed;
    auto b = run_switch_cal(s);
    auto sw = switching_ratio(switch_record(b.switch_cal));
    const auto& t = b.truth.at("switch");
    CHECK(t.at("power_ratio").get<double>() == Approx(0.98));
    const double expected = 1.01 * t.at("detector_port_w").get<double>() /
                            s.mpm.reading(s.switch_cal.range_dbm, t.at("monitor_port_w").get<double>());
    CHECK(std::abs(sw.ratio.value() / expected - 1.0) < 1e-3);
  }
}

TEST_CASE("cpm calibration table") {
  CpmCalibration c;
  c.set(1550.0, UncertainValue::lift(1.01, 0.01414));
  CHECK(c.contains(1550.0 + 1e-9));
  CHECK_FALSE(c.contains(1310.0));
  CHECK(c.at(1550.0).value() == 1.01);
  CHECK_THROWS_AS(c.at(1310.0), DataError);
  CHECK_THROWS_AS(c.set(1310.0, UncertainValue(0.0)), InvalidArgument);
  CHECK_THROWS_AS(require_same_wavelength(1550.0, 1550.1, "test"), DataError);
}

TEST_CASE("no attenuation gives alpha = 1") {
  auto m = fitted_model(scenario_preset("sde-oracle"));
  AttenCalRecord rec;
  rec.wavelength_nm = 1550.0;
  rec.zero_readings = {5.2e-5, 5.21e-5, 5.19e-5};
  rec.att_readings = rec.zero_readings;
  rec.att_range = RangeSetting::from_dbm(-10);
  auto a = calibrate_attenuator(rec, m);
  CHECK(a.alpha.value() == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("record invariants") {
  auto m = fitted_model(scenario_preset("sde-oracle"));
  AttenCalRecord rec;
  rec.attenuator_id = 2;
  rec.nominal_setting_db = 31.0;
  rec.wavelength_nm = 1550.0;
  rec.zero_readings = {5.2e-5};
  rec.att_readings = {4.1e-8};
  rec.att_phase_settings = {0.0, 31.0, 0.0};
  CHECK_NOTHROW(validate(rec));
  auto bad = rec;
  bad.att_phase_settings = {10.0, 31.0, 0.0};
  CHECK_THROWS_AS(validate(bad), DataError);
  bad = rec;
  bad.att_readings = {};
  CHECK_THROWS_AS(validate(bad), DataError);
  bad = rec;
  bad.attenuator_id = 4;
  CHECK_THROWS_AS(validate(bad), DataError);

  m.ranges.erase(-30);
  CHECK_THROWS_AS(calibrate_attenuator(rec, m), DataError);
}

TEST_CASE("gain beyond three sigma is suspicious") {
  auto m = fitted_model(scenario_preset("sde-oracle"));
  AttenCalRecord rec;
  rec.wavelength_nm = 1550.0;
  rec.zero_readings = {5.0e-5, 5.0e-5, 5.0e-5};
  rec.att_readings = {5.5e-5, 5.5e-5, 5.5e-5};
  rec.att_range = RangeSetting::from_dbm(-10);
  try {
    (void)calibrate_attenuator(rec, m);
    FAIL("expected a suspicious-gain error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("suspicious gain") != std::string::npos);
  }
}

TEST_CASE("four-term budget") {
  CHECK(attenuator_relative_sigma(0.001, 0.001, 0.00075, 0.00075) == Approx(0.0017678).epsilon(1e-4));
  CHECK(attenuator_relative_sigma(0.0, 0.0, 0.0, 0.0) == 0.0);
}

TEST_CASE("31 dB attenuators are recovered within 0.2 %") {
  int inside = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = scenario_preset("sde-oracle");
    s.seed = seed;
    auto m = fitted_model(s);
    auto b = run_attenuator_cal(s, 31.0, RangeSetting::from_dbm(-30));
    auto recs = atten_records(b.atten_cal);
    REQUIRE(recs.size() == 3);
    for (const auto& rec : recs) {
      auto a = calibrate_attenuator(rec, m);
      const double truth = b.truth.at("atten_cal").at("alpha").at(rec.attenuator_id - 1).get<double>();
      CHECK(truth == Approx(std::pow(10.0, -3.1)).epsilon(0.01));
      CHECK(a.alpha.relative_sigma() < 0.002);
      ++total;
      inside += std::abs(a.alpha.value() / truth - 1.0) <= 0.002;
    }
  }
  CHECK(inside >= 0.95 * total);
}

TEST_CASE("alpha does not depend on the CPM factor or the switch coupling") {
  auto s = scenario_preset("sde-oracle");
  s.seed = 4;
  auto m = fitted_model(s);
  auto base = atten_records(run_attenuator_cal(s, 31.0, RangeSetting::from_dbm(-30)).atten_cal);
  auto t = s;
  t.cpm.cf_certificate = 1.05;
  t.switch_detector = 0.3;
  auto other = atten_records(run_attenuator_cal(t, 31.0, RangeSetting::from_dbm(-30)).atten_cal);
  for (std::size_t i = 0; i < 3; ++i) {
    const double a = calibrate_attenuator(base[i], m).alpha.value();
    const double b = calibrate_attenuator(other[i], m).alpha.value();
    CHECK(std::abs(b / a - 1.0) < 1e-9);
  }
}

TEST_CASE("larger settings transmit less") {
  auto s = scenario_preset("sde-oracle");
  auto m = fitted_model(s);
  const std::vector<std::pair<double, int>> steps{{3.0, -10}, {10.0, -20}, {20.0, -30}, {31.0, -30}};
  for (int id = 1; id <= 3; ++id) {
    double previous = 1.0;
    for (auto [db, r] : steps) {
      auto recs = atten_records(run_attenuator_cal(s, db, RangeSetting::from_dbm(r)).atten_cal);
      const double a = calibrate_attenuator(recs.at(static_cast<std::size_t>(id - 1)), m).alpha.value();
      CHECK(a < previous);
      previous = a;
    }
  }
}

TEST_CASE("single calibrations predict the joint attenuation") {
  int inside = 0;
  const int seeds = 20;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    auto s = scenario_preset("sde-oracle");
    s.seed = seed;
    auto m = fitted_model(s);
    VirtualLab lab(s, 0);
    auto recs = atten_records(run_attenuator_cal(lab, 10.0, RangeSetting::from_dbm(-20)).atten_cal);
    std::array<AttenuatorCalibration, 3> cal;
    for (std::size_t i = 0; i < 3; ++i) cal[i] = calibrate_attenuator(recs[i], m);

    lab.set_attenuators({10.0, 10.0, 10.0});
    lab.set_range(-30);
    auto joint_reads = offset_corrected(lab, 10);
    auto joint = corrected_power(m, RangeSetting::from_dbm(-30), mean_reading(joint_reads));
    auto predicted = cal[0].zero_power * cal[0].alpha * cal[1].alpha * cal[2].alpha;
    auto diff = predicted - joint;
    inside += std::abs(diff.value()) <= 2.0 * diff.sigma();
  }
  CHECK(inside >= 18);
}

TEST_CASE("averaging before or after the correction agrees") {
  auto s = scenario_preset("paper-scale");
  auto m = fitted_model(s);
  auto recs = atten_records(run_attenuator_cal(s, 31.0, RangeSetting::from_dbm(-30)).atten_cal);
  for (const auto& rec : recs) {
    double corrected_mean = 0.0;
    for (double v : rec.att_readings) corrected_mean += v / nonlin_correction(m, rec.att_range, v).factor.value();
    corrected_mean /= static_cast<double>(rec.att_readings.size());
    const double mean_v =
        std::accumulate(rec.att_readings.begin(), rec.att_readings.end(), 0.0) / rec.att_readings.size();
    const double mean_corrected = mean_v / nonlin_correction(m, rec.att_range, mean_v).factor.value();
    CHECK(std::abs(corrected_mean / mean_corrected - 1.0) < 1e-6);
  }
}
