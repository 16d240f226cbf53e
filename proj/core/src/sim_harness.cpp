#include "sdem/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "sdem/errors.hpp"
#include "sdem/json_io.hpp"
#include "sdem/nonlin_cal.hpp"

namespace sdem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kMeterReadS = 0.2;
constexpr double kSettingChangeS = 0.5;
constexpr double kZeroS = 2.0;

constexpr std::uint64_t kStreamSession = 0x53455353;
constexpr std::uint64_t kStreamNonlin = 0x4e4f4e4c;
constexpr std::uint64_t kStreamSwitch = 0x53574954;
constexpr std::uint64_t kStreamAtten = 0x4154544e;
constexpr std::uint64_t kStreamSde = 0x53444520;
constexpr std::uint64_t kStreamPolscan = 0x504f4c53;
constexpr std::uint64_t kStreamStability = 0x53544142;
constexpr std::uint32_t kTruthTag = 0x54525554;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

/// Counts registered in one gate by a counter that starts idle.
std::int64_t registered_counts(std::mt19937_64& rng, double rate, double gate_s, double dead_time_s,
                               DeadTimeModel model) {
  if (!(rate > 0.0)) return 0;
  if (dead_time_s <= 0.0) {
    std::poisson_distribution<std::int64_t> pois(rate * gate_s);
    return pois(rng);
  }
  std::exponential_distribution<double> gap(rate);
  double t = gap(rng);
  double last_arrival = -1e300;
  double last_registered = -1e300;
  std::int64_t n = 0;
  while (t < gate_s) {
    const bool live = model == DeadTimeModel::kParalyzable ? t - last_arrival > dead_time_s
                                                           : t - last_registered > dead_time_s;
    if (live) {
      ++n;
      last_registered = t;
    }
    last_arrival = t;
    t += gap(rng);
  }
  return n;
}

std::string session_id_of(const SimScenario& s) { return "sim-" + s.name + "-" + std::to_string(s.seed); }

SessionBundle empty_bundle(const VirtualLab& lab) {
  SessionBundle b;
  b.session_id = session_id_of(lab.scenario());
  b.wavelength_nm = lab.scenario().wavelength_nm;
  return b;
}

/// Zero the meter at the current range: `reads` offset readings with the
/// light blocked.
std::vector<double> zero_meter(VirtualLab& lab, int reads) {
  lab.enable_attenuators(false);
  lab.advance(kZeroS);
  std::vector<double> out;
  for (int i = 0; i < reads; ++i) out.push_back(lab.mpm_read());
  lab.enable_attenuators(true);
  return out;
}

json vec_json(const std::array<double, 3>& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

// --- bundle ------------------------------------------------------------------------------------

void SessionBundle::merge(SessionBundle o) {
  auto take = [](auto& mine, auto& theirs) {
    if (mine.empty()) mine = std::move(theirs);
  };
  take(nonlin, o.nonlin);
  take(switch_cal, o.switch_cal);
  take(atten_cal, o.atten_cal);
  take(dark, o.dark);
  take(maxpol, o.maxpol);
  take(minpol, o.minpol);
  take(sde_atten, o.sde_atten);
  take(polscan, o.polscan);
  take(stability, o.stability);
  take(certificate, o.certificate);
  if (!polscan_grid) polscan_grid = o.polscan_grid;
  warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
  duration_s += o.duration_s;
  for (auto& [k, v] : o.truth.items()) truth[k] = v;
}

// --- laboratory --------------------------------------------------------------------------------

VirtualLab::VirtualLab(const SimScenario& scenario, std::uint64_t stream) : s_(scenario) {
  s_.validate();
  rng_ = make_rng(s_.seed, stream);
  // The meter's true factor depends on the seed alone, so every sequence
  // run for one seed sees the same instrument.
  std::seed_seq seq{static_cast<std::uint32_t>(s_.seed), static_cast<std::uint32_t>(s_.seed >> 32), kTruthTag};
  std::mt19937_64 truth(seq);
  std::normal_distribution<double> n01(0.0, 1.0);
  cpm_cf_ = s_.cpm.cf_certificate;
  if (s_.cpm.perturb_cf) cpm_cf_ *= 1.0 + s_.cpm.cf_rel_sigma * n01(truth);
}

void VirtualLab::advance(double seconds) {
  if (seconds <= 0.0) return;
  t_ += seconds;
  switch (s_.laser.drift) {
    case DriftModel::kNone:
      break;
    case DriftModel::kLinear:
      drift_ = s_.laser.linear_ppm_per_hour * 1e-6 * t_ / 3600.0;
      break;
    case DriftModel::kRandomWalk:
      drift_ += s_.laser.random_walk_per_sqrt_s * std::sqrt(seconds) * gauss();
      break;
  }
}

double VirtualLab::laser_w() const noexcept { return s_.laser.power_w * (1.0 + drift_); }

void VirtualLab::set_attenuators(const std::array<double, 3>& db) {
  for (int i = 0; i < 3; ++i) set_attenuator(i + 1, db[static_cast<std::size_t>(i)]);
}

void VirtualLab::set_attenuator(int id, double db) {
  if (id < 1 || id > 3) throw InvalidArgument("attenuator id must be 1..3");
  if (db < 0.0) throw InvalidArgument("attenuator setting must be >= 0 dB");
  auto& cur = att_db_[static_cast<std::size_t>(id - 1)];
  if (cur != db) advance(kSettingChangeS);
  cur = db;
}

void VirtualLab::set_range(int range_dbm) {
  RangeSetting::from_dbm(range_dbm);
  if (range_dbm != range_dbm_) advance(kSettingChangeS);
  range_dbm_ = range_dbm;
}

void VirtualLab::set_polarization(const std::array<double, 3>& stokes, double transmission) noexcept {
  stokes_ = stokes;
  pol_transmission_ = transmission;
}

double VirtualLab::port_power_w() const {
  if (!att_enabled_) return 0.0;
  double p = laser_w() * (route_ == Route::kMonitor ? s_.switch_monitor : s_.switch_detector);
  for (std::size_t i = 0; i < 3; ++i) p *= s_.attenuators[i].transmission(att_db_[i]);
  return p;
}

double VirtualLab::mpm_read() {
  const double incident = route_ == Route::kMonitor ? port_power_w() : 0.0;
  const double v = s_.mpm.reading(range_dbm_, incident);
  const double fs = RangeSetting::from_dbm(range_dbm_).full_scale_w();
  const double sd = std::hypot(s_.mpm.read_noise_rel * v, s_.mpm.noise_floor_rel_fs * fs);
  const auto it = s_.mpm.ranges.find(range_dbm_);
  const double offset = it == s_.mpm.ranges.end() ? 0.0 : it->second.zero_offset_w;
  const double reading = v + offset + sd * gauss();
  advance(kMeterReadS);
  return reading;
}

double VirtualLab::cpm_read() {
  const double incident = route_ == Route::kDetector ? port_power_w() * pol_transmission_ : 0.0;
  const double reading = cpm_cf_ * incident * (1.0 + s_.cpm.read_noise_rel * gauss());
  advance(kMeterReadS);
  return reading;
}

double VirtualLab::detection_rate() const {
  const double current = bias_current_a(bias_v_);
  double light = 0.0;
  if (route_ == Route::kDetector) {
    const double photons = port_power_w() * pol_transmission_ / photon_energy_j(s_.wavelength_nm);
    light = photons * s_.detector.sde(current) * s_.detector.pol_factor(stokes_);
  }
  return light + s_.detector.dark_rate(current);
}

std::int64_t VirtualLab::count_gate(double gate_s) {
  const std::int64_t n =
      registered_counts(rng_, detection_rate(), gate_s, s_.detector.dead_time_s, s_.detector.dead_time_model);
  advance(gate_s);
  return n;
}

// --- optics ----------------------------------------------------------------------------------------

std::array<double, 3> waveplate_stokes(double qwp_deg, double hwp_deg) {
  // Mueller matrix of a linear retarder acting on (S1, S2, S3).
  auto retard = [](const std::array<double, 3>& s, double axis_deg, double delta) {
    const double c = std::cos(2.0 * deg2rad(axis_deg));
    const double n = std::sin(2.0 * deg2rad(axis_deg));
    const double cd = std::cos(delta);
    const double sd = std::sin(delta);
    return std::array<double, 3>{
        (c * c + n * n * cd) * s[0] + c * n * (1.0 - cd) * s[1] - n * sd * s[2],
        c * n * (1.0 - cd) * s[0] + (n * n + c * c * cd) * s[1] + c * sd * s[2],
        n * sd * s[0] - c * sd * s[1] + cd * s[2],
    };
  };
  const std::array<double, 3> horizontal{1.0, 0.0, 0.0};
  return retard(retard(horizontal, qwp_deg, std::numbers::pi / 2.0), hwp_deg, std::numbers::pi);
}

std::array<double, 3> fiber_controller_stokes(double lat_deg, double lon_deg) {
  const double la = deg2rad(lat_deg);
  const double lo = deg2rad(lon_deg);
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}

double waveplate_transmission(double ripple, double qwp_deg, double hwp_deg) {
  return 1.0 - 0.5 * ripple * (1.0 - std::cos(deg2rad(2.0 * qwp_deg)) * std::cos(deg2rad(2.0 * hwp_deg)));
}

std::vector<double> bias_grid(const SdePlan& plan) {
  std::vector<double> v;
  const auto n = static_cast<int>(std::floor(plan.bias_stop_v / plan.bias_step_v + 1e-9));
  for (int i = 0; i <= n; ++i) v.push_back(std::round(i * plan.bias_step_v * 1e12) / 1e12);
  return v;
}

// --- nonlinearity sweep ---------------------------------------------------------------------------

SessionBundle run_nonlin_acquisition(VirtualLab& lab, double wavelength_nm) {
  const auto& s = lab.scenario();
  SessionBundle b = empty_bundle(lab);
  const double t0 = lab.now_s();
  std::vector<RangeSetting> ranges;
  for (int r : RangeSetting::kAdmitted) ranges.push_back(RangeSetting::from_dbm(r));
  const NonlinSchedule plan = plan_nonlin_sweep(ranges);
  b.warnings = plan.warnings;

  lab.set_route(VirtualLab::Route::kMonitor);
  lab.set_attenuators({0.0, 0.0, 0.0});
  int current = 0;
  for (const auto& e : plan.entries) {
    if (e.range.dbm() != current) {
      current = e.range.dbm();
      lab.set_range(current);
      for (double v : zero_meter(lab, s.nonlin.reads)) {
        b.nonlin.push_back({ReadKind::kOffset, 0.0, 0.0, current, wavelength_nm, v});
      }
    }
    lab.set_attenuator(1, e.att1_db);
    lab.set_attenuator(2, e.att2_db);
    for (int i = 0; i < s.nonlin.reads; ++i) {
      b.nonlin.push_back({ReadKind::kRead, e.att1_db, e.att2_db, current, wavelength_nm, lab.mpm_read()});
    }
  }
  lab.set_attenuators({0.0, 0.0, 0.0});
  b.duration_s = lab.now_s() - t0;

  json ranges_truth = json::object();
  for (int r : RangeSetting::kAdmitted) {
    ranges_truth[std::to_string(r)] = {{"scale", s.mpm.scale(r)},
                                       {"rf", r == kTopRangeDbm ? 1.0 : s.mpm.scale(r) / s.mpm.scale(r + 10)}};
  }
  b.truth["nonlin"] = {{"tau", s.attenuators[1].transmission(kAtt2On) / s.attenuators[1].transmission(kAtt2Off)},
                       {"ranges", ranges_truth},
                       {"duration_s", b.duration_s}};
  return b;
}

// --- switch calibration ---------------------------------------------------------------------------

SessionBundle run_switch_cal(VirtualLab& lab) {
  const auto& s = lab.scenario();
  SessionBundle b = empty_bundle(lab);
  const double t0 = lab.now_s();
  lab.set_attenuators({0.0, 0.0, 0.0});
  lab.set_polarization({1.0, 0.0, 0.0});

  lab.set_route(VirtualLab::Route::kDetector);
  lab.advance(kSettingChangeS);
  const double p_dp = lab.port_power_w();
  for (int i = 0; i < s.switch_cal.reads; ++i) {
    b.switch_cal.push_back({ReadKind::kRead, true, s.switch_cal.range_dbm, s.wavelength_nm, lab.cpm_read()});
  }
  lab.set_route(VirtualLab::Route::kMonitor);
  lab.set_range(s.switch_cal.range_dbm);
  for (double v : zero_meter(lab, s.switch_cal.reads)) {
    b.switch_cal.push_back({ReadKind::kOffset, false, s.switch_cal.range_dbm, s.wavelength_nm, v});
  }
  const double p_mon = lab.port_power_w();
  for (int i = 0; i < s.switch_cal.reads; ++i) {
    b.switch_cal.push_back({ReadKind::kRead, false, s.switch_cal.range_dbm, s.wavelength_nm, lab.mpm_read()});
  }
  b.certificate.push_back({s.wavelength_nm, s.cpm.cf_certificate, s.cpm.cf_rel_sigma});
  b.duration_s = lab.now_s() - t0;
  b.truth["switch"] = {{"power_ratio", s.switch_detector / s.switch_monitor},
                       {"detector_port_w", p_dp},
                       {"monitor_port_w", p_mon},
                       {"cpm_cf_true", lab.cpm_cf_true()},
                       {"duration_s", b.duration_s}};
  return b;
}

// --- attenuator calibration ------------------------------------------------------------------------

namespace {

std::vector<AttenRow> attenuator_sequence(VirtualLab& lab, double att_db, RangeSetting range, json& truth) {
  const auto& s = lab.scenario();
  std::vector<AttenRow> rows;
  lab.set_route(VirtualLab::Route::kMonitor);
  lab.set_attenuators({0.0, 0.0, 0.0});
  json alphas = json::array();
  for (int id = 1; id <= 3; ++id) {
    for (bool attenuated : {false, true}) {
      const int r = attenuated ? range.dbm() : kTopRangeDbm;
      if (attenuated) lab.set_attenuator(id, att_db);
      lab.set_range(r);
      for (double v : zero_meter(lab, s.atten_cal.reads)) {
        rows.push_back({ReadKind::kOffset, id, attenuated, lab.attenuators(), r, s.wavelength_nm, v});
      }
      for (int i = 0; i < s.atten_cal.reads; ++i) {
        const double v = lab.mpm_read();
        rows.push_back({ReadKind::kRead, id, attenuated, lab.attenuators(), r, s.wavelength_nm, v});
      }
    }
    lab.set_attenuator(id, 0.0);
    alphas.push_back(s.attenuators[static_cast<std::size_t>(id - 1)].transmission(att_db) /
                     s.attenuators[static_cast<std::size_t>(id - 1)].transmission(0.0));
  }
  const double p_mon = lab.laser_w() * s.switch_monitor;
  json reading_truth = json::object();
  for (int id = 1; id <= 3; ++id) {
    const double zero_v = s.mpm.reading(kTopRangeDbm, p_mon);
    const double att_v = s.mpm.reading(range.dbm(), p_mon * alphas[static_cast<std::size_t>(id - 1)].get<double>());
    reading_truth[std::to_string(id)] = {{"zero_reading_w", zero_v},
                                         {"att_reading_w", att_v},
                                         {"cf_nl_zero", s.mpm.cf_nl(kTopRangeDbm, zero_v)},
                                         {"cf_nl_att", s.mpm.cf_nl(range.dbm(), att_v)}};
  }
  truth = {{"att_db", att_db}, {"range_dbm", range.dbm()}, {"alpha", alphas}, {"readings", reading_truth}};
  return rows;
}

/// Coordinate ascent of the all-fiber controller on measured counts. Ties
/// keep the first point found.
std::array<double, 2> optimize_polarization(VirtualLab& lab, bool maximize, int iterations, double gate_s) {
  std::array<double, 2> x{0.0, 0.0};
  auto measure = [&](const std::array<double, 2>& p) {
    lab.set_polarization(fiber_controller_stokes(p[0], p[1]));
    const double c = static_cast<double>(lab.count_gate(gate_s));
    return maximize ? c : -c;
  };
  double best = measure(x);
  double step = 45.0;
  for (int it = 0; it < iterations && step >= 0.5; ++it) {
    bool moved = false;
    for (std::size_t axis = 0; axis < 2; ++axis) {
      for (double dir : {1.0, -1.0}) {
        std::array<double, 2> y = x;
        y[axis] += dir * step;
        y[0] = std::clamp(y[0], -90.0, 90.0);
        const double v = measure(y);
        if (v > best) {
          best = v;
          x = y;
          moved = true;
          break;
        }
      }
    }
    if (!moved) step /= 2.0;
  }
  lab.set_polarization(fiber_controller_stokes(x[0], x[1]));
  return x;
}

}  // namespace

SessionBundle run_attenuator_cal(VirtualLab& lab, double att_db, RangeSetting range) {
  SessionBundle b = empty_bundle(lab);
  const double t0 = lab.now_s();
  json truth;
  b.atten_cal = attenuator_sequence(lab, att_db, range, truth);
  b.duration_s = lab.now_s() - t0;
  truth["duration_s"] = b.duration_s;
  b.truth["atten_cal"] = truth;
  return b;
}

// --- SDE counting session -------------------------------------------------------------------------

SessionBundle run_sde_session(VirtualLab& lab, std::span<const double> grid, double att_db, RangeSetting range) {
  const auto& s = lab.scenario();
  SessionBundle b = empty_bundle(lab);
  const double t0 = lab.now_s();
  const double gate = s.sde.gate_s;

  lab.set_attenuators({att_db, att_db, att_db});
  lab.set_bias(0.0);

  // Dark scan: light routed away from the detector and blocked.
  lab.set_route(VirtualLab::Route::kMonitor);
  lab.enable_attenuators(false);
  for (double v : grid) {
    lab.set_bias(v);
    for (int i = 1; i <= s.sde.gates; ++i) b.dark.push_back({v, CountPhase::kDark, lab.count_gate(gate), i, gate});
  }
  lab.set_bias(0.0);

  lab.enable_attenuators(true);
  lab.set_route(VirtualLab::Route::kDetector);
  lab.set_bias(s.sde.pol_bias_v);
  const auto max_settings = optimize_polarization(lab, true, s.sde.optimizer_iterations, gate);
  const auto min_settings = optimize_polarization(lab, false, s.sde.optimizer_iterations, gate);
  lab.set_bias(0.0);

  const double photons = lab.port_power_w() / photon_energy_j(s.wavelength_nm);
  json phases = json::object();
  for (const auto& [settings, phase, out] :
       {std::tuple{max_settings, CountPhase::kMaxPol, &b.maxpol}, std::tuple{min_settings, CountPhase::kMinPol, &b.minpol}}) {
    lab.set_polarization(fiber_controller_stokes(settings[0], settings[1]));
    const double pf = s.detector.pol_factor(lab.polarization());
    json curve = json::array();
    for (double v : grid) {
      lab.set_bias(v);
      for (int i = 1; i <= s.sde.gates; ++i) out->push_back({v, phase, lab.count_gate(gate), i, gate});
      curve.push_back({{"bias_v", v}, {"sde", s.detector.sde(bias_current_a(v)) * pf}});
    }
    lab.set_bias(0.0);
    phases[to_string(phase)] = {{"controller_deg", {settings[0], settings[1]}},
                                {"stokes", vec_json(lab.polarization())},
                                {"pol_factor", pf},
                                {"curve", curve}};
  }

  lab.set_route(VirtualLab::Route::kMonitor);
  json atten_truth;
  b.sde_atten = attenuator_sequence(lab, att_db, range, atten_truth);
  b.duration_s = lab.now_s() - t0;

  const double p_dp = lab.laser_w() * s.switch_detector;
  b.truth["sde"] = {{"p_dp_w", p_dp},
                    {"photon_rate_per_s", photons},
                    {"att_db", att_db},
                    {"range_dbm", range.dbm()},
                    {"attenuators", atten_truth},
                    {"dead_time_s", s.detector.dead_time_s},
                    {"dead_time_model", to_string(s.detector.dead_time_model)},
                    {"pol_bias_v", s.sde.pol_bias_v},
                    {"phases", phases},
                    {"duration_s", b.duration_s}};
  return b;
}

// --- polarization sweep ---------------------------------------------------------------------------

SessionBundle run_polscan(VirtualLab& lab, const GridSpec& grid) {
  const auto& s = lab.scenario();
  const auto& plan = s.polscan;
  SessionBundle b = empty_bundle(lab);
  b.polscan_grid = grid;
  const double t0 = lab.now_s();
  lab.set_route(VirtualLab::Route::kDetector);
  std::normal_distribution<double> n01(0.0, 1.0);

  auto visit = [&](int i, int j) {
    const double q = grid.qwp_angle(i);
    const double h = grid.hwp_angle(j);
    lab.set_polarization(waveplate_stokes(q, h), waveplate_transmission(s.controller.transmission_ripple, q, h));
    lab.advance(plan.settle_s);
  };

  // Classical-level pass: the reference meter behind the controller and the
  // monitor tap are read together at every grid point.
  lab.set_bias(0.0);
  lab.set_attenuators({0.0, 0.0, 0.0});
  for (int i = 0; i < grid.steps; ++i) {
    for (int j = 0; j < grid.steps; ++j) {
      visit(i, j);
      PolGridRecord g;
      g.qwp_deg = grid.qwp_angle(i);
      g.hwp_deg = grid.hwp_angle(j);
      g.gate_s = plan.gate_s;
      const double through = lab.port_power_w() * waveplate_transmission(s.controller.transmission_ripple, g.qwp_deg, g.hwp_deg);
      const double monitor = lab.laser_w() * s.switch_monitor;
      g.cpm_w = lab.cpm_cf_true() * through * (1.0 + s.controller.read_noise_rel * n01(lab.rng()));
      g.mpm_w = s.mpm.reading(kTopRangeDbm, monitor) * (1.0 + s.controller.read_noise_rel * n01(lab.rng()));
      lab.advance(kMeterReadS);
      b.polscan.push_back(std::move(g));
    }
  }

  // Counting pass over the same grid.
  lab.set_attenuators(plan.att_db);
  lab.set_bias(plan.bias_v);
  double fmax = 0.0;
  double fmin = 1e300;
  auto rec = b.polscan.begin();
  for (int i = 0; i < grid.steps; ++i) {
    for (int j = 0; j < grid.steps; ++j, ++rec) {
      visit(i, j);
      const double f = s.detector.pol_factor(lab.polarization());
      fmax = std::max(fmax, f);
      fmin = std::min(fmin, f);
      for (int k = 0; k < plan.gates; ++k) rec->counts.push_back(lab.count_gate(plan.gate_s));
      if (plan.dark_per_point) {
        lab.enable_attenuators(false);
        rec->dark_counts = lab.count_gate(plan.gate_s);
        lab.enable_attenuators(true);
      }
    }
  }
  lab.set_bias(0.0);
  b.duration_s = lab.now_s() - t0;
  b.truth["polscan"] = {{"ps", s.detector.ps},
                        {"ps_on_grid", fmax / fmin},
                        {"pol_axis", vec_json(s.detector.pol_axis)},
                        {"transmission_ripple", s.controller.transmission_ripple},
                        {"bias_v", plan.bias_v},
                        {"duration_s", b.duration_s}};
  return b;
}

// --- source stability ------------------------------------------------------------------------------

SessionBundle run_stability(VirtualLab& lab) {
  const auto& s = lab.scenario();
  SessionBundle b = empty_bundle(lab);
  const double dt = 1.0 / s.stability.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(s.stability.duration_s * s.stability.sample_rate_hz));
  lab.set_route(VirtualLab::Route::kMonitor);
  lab.set_attenuators({0.0, 0.0, 0.0});
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = lab.port_power_w() * (1.0 + s.stability.meter_noise_rel * n01(lab.rng()));
    b.stability.push_back({static_cast<double>(i) * dt, p});
    lab.advance(dt);
  }
  b.duration_s = static_cast<double>(n) * dt;
  b.truth["stability"] = {{"drift", to_string(s.laser.drift)},
                          {"random_walk_per_sqrt_s", s.laser.random_walk_per_sqrt_s},
                          {"meter_noise_rel", s.stability.meter_noise_rel},
                          {"sample_rate_hz", s.stability.sample_rate_hz}};
  return b;
}

// --- fresh-laboratory wrappers -------------------------------------------------------------------

SessionBundle run_nonlin_acquisition(const SimScenario& s, double wavelength_nm) {
  VirtualLab lab(s, kStreamNonlin);
  return run_nonlin_acquisition(lab, wavelength_nm);
}

SessionBundle run_switch_cal(const SimScenario& s) {
  VirtualLab lab(s, kStreamSwitch);
  return run_switch_cal(lab);
}

SessionBundle run_attenuator_cal(const SimScenario& s, double att_db, RangeSetting range) {
  VirtualLab lab(s, kStreamAtten);
  return run_attenuator_cal(lab, att_db, range);
}

SessionBundle run_sde_session(const SimScenario& s, std::span<const double> grid, double att_db, RangeSetting range) {
  VirtualLab lab(s, kStreamSde);
  return run_sde_session(lab, grid, att_db, range);
}

SessionBundle run_polscan(const SimScenario& s, const GridSpec& grid) {
  VirtualLab lab(s, kStreamPolscan);
  return run_polscan(lab, grid);
}

SessionBundle run_stability(const SimScenario& s) {
  VirtualLab lab(s, kStreamStability);
  return run_stability(lab);
}

SessionBundle simulate_session(const SimScenario& s, const SimulateOptions& o) {
  VirtualLab lab(s, kStreamSession);
  SessionBundle b = empty_bundle(lab);
  const RangeSetting att_range = RangeSetting::from_dbm(s.atten_cal.range_dbm);
  if (o.nonlin) b.merge(run_nonlin_acquisition(lab, s.wavelength_nm));
  if (o.switch_cal) b.merge(run_switch_cal(lab));
  if (o.atten_cal) b.merge(run_attenuator_cal(lab, s.atten_cal.att_db, att_range));
  if (o.sde) {
    const auto grid = bias_grid(s.sde);
    b.merge(run_sde_session(lab, grid, s.atten_cal.att_db, att_range));
  }
  if (o.polscan) b.merge(run_polscan(lab, s.polscan.grid));
  if (o.stability) b.merge(run_stability(lab));
  if (b.certificate.empty()) b.certificate.push_back({s.wavelength_nm, s.cpm.cf_certificate, s.cpm.cf_rel_sigma});
  b.truth["scenario"] = to_json(s);
  b.truth["cpm_cf_true"] = lab.cpm_cf_true();
  b.truth["session_duration_s"] = b.duration_s;
  return b;
}

void write_bundle(const SessionBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  SessionManifest m;
  m.session_id = b.session_id;
  m.wavelength_nm = b.wavelength_nm;
  m.warnings = b.warnings;
  m.polscan_grid = b.polscan_grid;
  auto add = [&](const std::string& role, const std::string& file) { m.files[role] = {file, ""}; };
  if (!b.nonlin.empty()) {
    write_nonlin_csv(dir / "nonlin.csv", b.nonlin, b.warnings);
    add("nonlin", "nonlin.csv");
  }
  if (!b.switch_cal.empty()) {
    write_switch_csv(dir / "switch_cal.csv", b.switch_cal);
    add("switch_cal", "switch_cal.csv");
  }
  if (!b.atten_cal.empty()) {
    write_atten_csv(dir / "atten_cal.csv", b.atten_cal);
    add("atten_cal", "atten_cal.csv");
  }
  if (!b.dark.empty()) {
    write_count_csv(dir / "dark.csv", b.dark);
    add("dark", "dark.csv");
  }
  if (!b.maxpol.empty()) {
    write_count_csv(dir / "maxpol.csv", b.maxpol);
    add("maxpol", "maxpol.csv");
  }
  if (!b.minpol.empty()) {
    write_count_csv(dir / "minpol.csv", b.minpol);
    add("minpol", "minpol.csv");
  }
  if (!b.sde_atten.empty()) {
    write_atten_csv(dir / "sde_atten.csv", b.sde_atten);
    add("sde_atten", "sde_atten.csv");
  }
  if (!b.polscan.empty()) {
    write_polscan_csv(dir / "polscan.csv", b.polscan);
    add("polscan", "polscan.csv");
  }
  if (!b.stability.empty()) {
    write_stability_csv(dir / "stability.csv", b.stability);
    add("stability", "stability.csv");
  }
  if (!b.certificate.empty()) {
    write_certificate_csv(dir / "cpm_certificate.csv", b.certificate);
    add("cpm_certificate", "cpm_certificate.csv");
  }
  m.extra = {{"simulated", true}, {"duration_s", b.duration_s}};
  write_manifest(dir, m);

  fs::create_directories(dir / kTruthDir);
  std::ofstream out(dir / kTruthDir / "ground_truth.json", std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write ground truth under " + dir.string());
  out << dump_json(b.truth) << '\n';
}

double simulate_dead_time_fraction(double rate, double dead_time_s, DeadTimeModel model, std::uint64_t arrivals,
                                   std::uint64_t seed) {
  if (!(rate > 0.0) || arrivals == 0) throw InvalidArgument("dead-time simulation needs rate > 0 and arrivals > 0");
  std::mt19937_64 rng = make_rng(seed, 0x44454144);
  std::exponential_distribution<double> gap(rate);
  double t = 0.0;
  double last_arrival = -1e300;
  double last_registered = -1e300;
  std::uint64_t registered = 0;
  for (std::uint64_t i = 0; i < arrivals; ++i) {
    t += gap(rng);
    const bool live = model == DeadTimeModel::kParalyzable ? t - last_arrival > dead_time_s
                                                           : t - last_registered > dead_time_s;
    if (live) {
      ++registered;
      last_registered = t;
    }
    last_arrival = t;
  }
  return static_cast<double>(registered) / static_cast<double>(arrivals);
}

}  // namespace sdem
