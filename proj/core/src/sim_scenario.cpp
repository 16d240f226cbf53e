#include "sdem/sim_scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "sdem/errors.hpp"
#include "sdem/instrument.hpp"

namespace sdem {

using nlohmann::json;

std::string to_string(DriftModel m) {
  switch (m) {
    case DriftModel::kNone:
      return "none";
    case DriftModel::kLinear:
      return "linear";
    case DriftModel::kRandomWalk:
      return "random_walk";
  }
  return "?";
}

DriftModel drift_model_from_string(const std::string& s) {
  if (s == "none") return DriftModel::kNone;
  if (s == "linear") return DriftModel::kLinear;
  if (s == "random_walk") return DriftModel::kRandomWalk;
  throw InvalidArgument("unknown drift model '" + s + "'");
}

double AttenuatorTruth::transmission(double nominal_db) const {
  for (const auto& [db, t] : overrides) {
    if (std::abs(db - nominal_db) < 1e-9) return t;
  }
  return std::pow(10.0, -nominal_db / 10.0) * (1.0 + error_per_db * nominal_db);
}

double MpmTruth::scale(int range_dbm) const {
  double s = gain;
  for (int r = range_dbm; r < kTopRangeDbm; r += 10) {
    auto it = discontinuity.find(r);
    if (it != discontinuity.end()) s *= it->second;
  }
  return s;
}

double MpmTruth::linearized(int range_dbm, double reading_w) const {
  const double fs = RangeSetting::from_dbm(range_dbm).full_scale_w();
  const auto it = ranges.find(range_dbm);
  double p = reading_w;
  if (it != ranges.end()) {
    const double u = reading_w / fs;
    double uk = u;
    for (double b : it->second.beta) {
      uk *= u;
      p += fs * b * uk;
    }
  }
  return p;
}

double MpmTruth::reading(int range_dbm, double incident_w) const {
  const double target = scale(range_dbm) * incident_w;
  const double fs = RangeSetting::from_dbm(range_dbm).full_scale_w();
  const auto it = ranges.find(range_dbm);
  double v = target;
  if (it == ranges.end() || it->second.beta.empty()) return v;
  for (int iter = 0; iter < 50; ++iter) {
    const double u = v / fs;
    double f = v - target;
    double df = 1.0;
    double uk = u;
    for (std::size_t i = 0; i < it->second.beta.size(); ++i) {
      const double k = static_cast<double>(i + 2);
      df += k * it->second.beta[i] * uk;
      uk *= u;
      f += fs * it->second.beta[i] * uk;
    }
    const double step = f / df;
    v -= step;
    if (std::abs(step) <= 1e-15 * std::abs(v)) break;
  }
  return v;
}

double MpmTruth::cf_nl(int range_dbm, double reading_w) const {
  return reading_w / linearized(range_dbm, reading_w) * scale(range_dbm) / gain;
}

double DetectorTruth::sde(double bias_current_a) const {
  return sde_plateau * 0.5 * (1.0 + std::erf((bias_current_a - i_sat_a) / width_a));
}

double DetectorTruth::dark_rate(double bias_current_a) const {
  return dark_ref_cps * std::exp((bias_current_a - dark_ref_current_a) / dark_scale_a);
}

double DetectorTruth::pol_factor(const std::array<double, 3>& stokes) const {
  const double norm = std::sqrt(pol_axis[0] * pol_axis[0] + pol_axis[1] * pol_axis[1] + pol_axis[2] * pol_axis[2]);
  const double dot = (stokes[0] * pol_axis[0] + stokes[1] * pol_axis[1] + stokes[2] * pol_axis[2]) / norm;
  const double d = 1.0 - 1.0 / ps;
  return 1.0 - d * (1.0 - dot) / 2.0;
}

void SimScenario::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("scenario: " + m); };
  if (!(wavelength_nm > 0.0)) fail("wavelength must be > 0");
  if (!(laser.power_w > 0.0)) fail("laser power must be > 0");
  if (laser.random_walk_per_sqrt_s < 0.0) fail("drift sigma must be >= 0");
  for (double c : {switch_monitor, switch_detector}) {
    if (!(c > 0.0 && c <= 1.0)) fail("switch couplings must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (const auto& [db, t] : attenuators[i].overrides) {
      if (!(t > 0.0 && t <= 1.0)) fail("attenuator " + std::to_string(i + 1) + " transmission outside (0, 1]");
    }
    for (double db : {0.0, 3.0, atten_cal.att_db, polscan.att_db[i]}) {
      const double t = attenuators[i].transmission(db);
      if (!(t > 0.0 && t <= 1.0)) fail("attenuator " + std::to_string(i + 1) + " transmission outside (0, 1]");
    }
  }
  if (mpm.read_noise_rel < 0.0 || mpm.noise_floor_rel_fs < 0.0 || cpm.read_noise_rel < 0.0 ||
      controller.read_noise_rel < 0.0 || stability.meter_noise_rel < 0.0 || cpm.cf_rel_sigma < 0.0) {
    fail("noise sigmas must be >= 0");
  }
  if (!(mpm.gain > 0.0) || !(cpm.cf_certificate > 0.0)) fail("meter gains must be > 0");
  for (const auto& [r, t] : mpm.ranges) {
    if (!RangeSetting::is_admitted(r)) fail("unknown meter range " + std::to_string(r));
  }
  for (const auto& [r, d] : mpm.discontinuity) {
    if (!RangeSetting::is_admitted(r) || r == kTopRangeDbm) fail("discontinuity keyed by an invalid range");
    if (!(d > 0.0)) fail("discontinuity factors must be > 0");
  }
  if (!(detector.sde_plateau >= 0.0 && detector.sde_plateau <= 1.0)) fail("SDE plateau outside [0, 1]");
  if (!(detector.ps >= 1.0)) fail("PS must be >= 1");
  if (detector.dead_time_s < 0.0 || detector.dark_ref_cps < 0.0) fail("dead time and dark rate must be >= 0");
  if (!(detector.width_a > 0.0) || !(detector.dark_scale_a > 0.0)) fail("detector widths must be > 0");
  if (!(controller.transmission_ripple >= 0.0 && controller.transmission_ripple < 1.0)) {
    fail("controller ripple must lie in [0, 1)");
  }
  if (nonlin.reads < 1 || switch_cal.reads < 1 || atten_cal.reads < 1 || sde.gates < 1 || polscan.gates < 1) {
    fail("read and gate counts must be >= 1");
  }
  if (!(sde.gate_s > 0.0) || !(polscan.gate_s > 0.0)) fail("gate times must be > 0");
  if (!(sde.bias_step_v > 0.0) || sde.bias_stop_v < 0.0) fail("bias grid must have a positive step");
  if (polscan.grid.steps < 1) fail("polarization grid needs at least one step");
  if (!(stability.sample_rate_hz > 0.0) || !(stability.duration_s > 0.0)) fail("stability plan must be positive");
  if (!RangeSetting::is_admitted(switch_cal.range_dbm) || !RangeSetting::is_admitted(atten_cal.range_dbm)) {
    fail("plan ranges must be admitted meter ranges");
  }
}

// --- presets ---------------------------------------------------------------------

namespace {

MpmTruth default_meter() {
  MpmTruth m;
  m.ranges[-10] = {{-0.012}, 2.0e-8};
  m.ranges[-20] = {{0.008}, -1.5e-9};
  m.ranges[-30] = {{-0.006, 0.008}, 3.0e-10};
  m.ranges[-40] = {{0.010, -0.008}, 2.0e-11};
  m.ranges[-50] = {{-0.009}, -4.0e-12};
  m.ranges[-60] = {{0.007, 0.010}, 1.0e-12};
  m.discontinuity = {{-20, 1.003}, {-30, 0.9975}, {-40, 1.004}, {-50, 0.997}, {-60, 1.0025}};
  return m;
}

// Relative read noise at which the fitted CF_NL sigma on the -30 dBm range
// lands in the middle of the 0.061-0.075 % band quoted for that setup.
constexpr double kPaperScaleReadNoise = 1.15e-3;

SimScenario base_scenario() {
  SimScenario s;
  s.mpm = default_meter();
  s.attenuators[0].error_per_db = 1.0e-4;
  s.attenuators[1].error_per_db = -6.0e-5;
  s.attenuators[1].overrides[3.0] = 0.5;
  s.attenuators[2].error_per_db = 8.0e-5;
  return s;
}

}  // namespace

std::vector<std::string> scenario_preset_names() {
  return {"default", "paper-scale", "sde-oracle", "polscan-oracle", "stability"};
}

SimScenario scenario_preset(const std::string& name) {
  SimScenario s = base_scenario();
  s.name = name;
  if (name == "default" || name == "stability") return s;
  if (name == "paper-scale") {
    s.laser.drift = DriftModel::kNone;
    s.mpm.read_noise_rel = kPaperScaleReadNoise;
    return s;
  }
  if (name == "sde-oracle") {
    s.laser.drift = DriftModel::kNone;
    s.mpm.read_noise_rel = kPaperScaleReadNoise;
    s.detector.dead_time_s = 0.0;
    return s;
  }
  if (name == "polscan-oracle") {
    s.laser.drift = DriftModel::kNone;
    s.detector.dead_time_s = 0.0;
    s.detector.ps = 1.02;
    return s;
  }
  throw InvalidArgument("unknown scenario preset '" + name + "'");
}

SimScenario with_random_meter(SimScenario s, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d657472u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_int_distribution<int> order(1, 4);

  for (int r : RangeSetting::kAdmitted) {
    const int n = order(rng);
    std::vector<double> beta;
    for (int k = 2; k <= n; ++k) beta.push_back(sym(rng));
    if (!beta.empty()) {
      // Largest |P(V) - V| / FS over the swept span.
      double peak = 0.0;
      for (int i = 0; i <= 200; ++i) {
        const double u = 1.05 * i / 200.0;
        double acc = 0.0;
        double uk = u;
        for (double b : beta) {
          uk *= u;
          acc += b * uk;
        }
        peak = std::max(peak, std::abs(acc));
      }
      const double target = 0.005 + 0.025 * unit(rng);
      if (peak > 0.0) {
        for (double& b : beta) b *= target / peak;
      }
    }
    s.mpm.ranges[r].beta = std::move(beta);
  }
  for (int r : RangeSetting::kAdmitted) {
    if (r == kTopRangeDbm) continue;
    const double mag = 0.002 + 0.003 * unit(rng);
    s.mpm.discontinuity[r] = unit(rng) < 0.5 ? 1.0 - mag : 1.0 + mag;
  }
  s.mpm.read_noise_rel = 5e-4 + 5e-4 * unit(rng);
  s.attenuators[1].overrides[3.0] = 0.5;
  return s;
}

// --- JSON ---------------------------------------------------------------------------

namespace {

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw DataError("scenario: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (j_.contains(key)) out = j_.at(key).get<T>();
  }

  const json* sub(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw DataError("scenario: unknown key '" + child(k.c_str()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string db_key(double db) {
  std::ostringstream os;
  os.precision(17);
  os << db;
  return os.str();
}

}  // namespace

json to_json(const SimScenario& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["wavelength_nm"] = s.wavelength_nm;
  j["laser"] = {{"power_w", s.laser.power_w},
                {"drift", to_string(s.laser.drift)},
                {"linear_ppm_per_hour", s.laser.linear_ppm_per_hour},
                {"random_walk_per_sqrt_s", s.laser.random_walk_per_sqrt_s}};
  json atts = json::array();
  for (const auto& a : s.attenuators) {
    json o = json::object();
    for (const auto& [db, t] : a.overrides) o[db_key(db)] = t;
    atts.push_back({{"error_per_db", a.error_per_db}, {"overrides", o}});
  }
  j["attenuators"] = atts;
  j["switch"] = {{"monitor", s.switch_monitor}, {"detector", s.switch_detector}};
  json ranges = json::object();
  for (const auto& [r, t] : s.mpm.ranges) {
    ranges[std::to_string(r)] = {{"beta", t.beta}, {"zero_offset_w", t.zero_offset_w}};
  }
  json disc = json::object();
  for (const auto& [r, d] : s.mpm.discontinuity) disc[std::to_string(r)] = d;
  j["mpm"] = {{"gain", s.mpm.gain},
              {"ranges", ranges},
              {"discontinuity", disc},
              {"read_noise_rel", s.mpm.read_noise_rel},
              {"noise_floor_rel_fs", s.mpm.noise_floor_rel_fs}};
  j["cpm"] = {{"cf_certificate", s.cpm.cf_certificate},
              {"cf_rel_sigma", s.cpm.cf_rel_sigma},
              {"read_noise_rel", s.cpm.read_noise_rel},
              {"perturb_cf", s.cpm.perturb_cf}};
  const auto& d = s.detector;
  j["detector"] = {{"sde_plateau", d.sde_plateau},
                   {"i_sat_a", d.i_sat_a},
                   {"width_a", d.width_a},
                   {"dark_ref_cps", d.dark_ref_cps},
                   {"dark_ref_current_a", d.dark_ref_current_a},
                   {"dark_scale_a", d.dark_scale_a},
                   {"dead_time_s", d.dead_time_s},
                   {"dead_time_model", to_string(d.dead_time_model)},
                   {"ps", d.ps},
                   {"pol_axis", d.pol_axis}};
  j["controller"] = {{"transmission_ripple", s.controller.transmission_ripple},
                     {"read_noise_rel", s.controller.read_noise_rel}};
  j["nonlin"] = {{"reads", s.nonlin.reads}};
  j["switch_cal"] = {{"reads", s.switch_cal.reads}, {"range_dbm", s.switch_cal.range_dbm}};
  j["atten_cal"] = {{"reads", s.atten_cal.reads}, {"att_db", s.atten_cal.att_db}, {"range_dbm", s.atten_cal.range_dbm}};
  j["sde"] = {{"bias_stop_v", s.sde.bias_stop_v},
              {"bias_step_v", s.sde.bias_step_v},
              {"pol_bias_v", s.sde.pol_bias_v},
              {"gates", s.sde.gates},
              {"gate_s", s.sde.gate_s},
              {"optimizer_iterations", s.sde.optimizer_iterations}};
  const auto& g = s.polscan.grid;
  j["polscan"] = {{"grid",
                   {{"qwp_start_deg", g.qwp_start_deg},
                    {"qwp_span_deg", g.qwp_span_deg},
                    {"hwp_start_deg", g.hwp_start_deg},
                    {"hwp_span_deg", g.hwp_span_deg},
                    {"steps", g.steps}}},
                  {"att_db", s.polscan.att_db},
                  {"bias_v", s.polscan.bias_v},
                  {"gates", s.polscan.gates},
                  {"gate_s", s.polscan.gate_s},
                  {"dark_per_point", s.polscan.dark_per_point},
                  {"settle_s", s.polscan.settle_s}};
  j["stability"] = {{"duration_s", s.stability.duration_s},
                    {"sample_rate_hz", s.stability.sample_rate_hz},
                    {"meter_noise_rel", s.stability.meter_noise_rel}};
  return j;
}

SimScenario scenario_from_json(const json& j) {
  SimScenario s = base_scenario();
  try {
    ObjectReader top(j, "");
    top.get("name", s.name);
    top.get("seed", s.seed);
    top.get("wavelength_nm", s.wavelength_nm);
    if (const json* l = top.sub("laser")) {
      ObjectReader r(*l, "laser");
      r.get("power_w", s.laser.power_w);
      std::string drift = to_string(s.laser.drift);
      r.get("drift", drift);
      s.laser.drift = drift_model_from_string(drift);
      r.get("linear_ppm_per_hour", s.laser.linear_ppm_per_hour);
      r.get("random_walk_per_sqrt_s", s.laser.random_walk_per_sqrt_s);
      r.finish();
    }
    if (const json* a = top.sub("attenuators")) {
      if (!a->is_array() || a->size() != 3) throw DataError("scenario: 'attenuators' must list three entries");
      for (std::size_t i = 0; i < 3; ++i) {
        ObjectReader r((*a)[i], "attenuators[" + std::to_string(i) + "]");
        r.get("error_per_db", s.attenuators[i].error_per_db);
        if (const json* o = r.sub("overrides")) {
          s.attenuators[i].overrides.clear();
          for (const auto& [k, v] : o->items()) s.attenuators[i].overrides[std::stod(k)] = v.get<double>();
        }
        r.finish();
      }
    }
    if (const json* sw = top.sub("switch")) {
      ObjectReader r(*sw, "switch");
      r.get("monitor", s.switch_monitor);
      r.get("detector", s.switch_detector);
      r.finish();
    }
    if (const json* m = top.sub("mpm")) {
      ObjectReader r(*m, "mpm");
      r.get("gain", s.mpm.gain);
      if (const json* rs = r.sub("ranges")) {
        s.mpm.ranges.clear();
        for (const auto& [k, v] : rs->items()) {
          ObjectReader rr(v, "mpm.ranges." + k);
          MeterRangeTruth t;
          rr.get("beta", t.beta);
          rr.get("zero_offset_w", t.zero_offset_w);
          rr.finish();
          s.mpm.ranges[std::stoi(k)] = t;
        }
      }
      if (const json* ds = r.sub("discontinuity")) {
        s.mpm.discontinuity.clear();
        for (const auto& [k, v] : ds->items()) s.mpm.discontinuity[std::stoi(k)] = v.get<double>();
      }
      r.get("read_noise_rel", s.mpm.read_noise_rel);
      r.get("noise_floor_rel_fs", s.mpm.noise_floor_rel_fs);
      r.finish();
    }
    if (const json* c = top.sub("cpm")) {
      ObjectReader r(*c, "cpm");
      r.get("cf_certificate", s.cpm.cf_certificate);
      r.get("cf_rel_sigma", s.cpm.cf_rel_sigma);
      r.get("read_noise_rel", s.cpm.read_noise_rel);
      r.get("perturb_cf", s.cpm.perturb_cf);
      r.finish();
    }
    if (const json* d = top.sub("detector")) {
      ObjectReader r(*d, "detector");
      auto& t = s.detector;
      r.get("sde_plateau", t.sde_plateau);
      r.get("i_sat_a", t.i_sat_a);
      r.get("width_a", t.width_a);
      r.get("dark_ref_cps", t.dark_ref_cps);
      r.get("dark_ref_current_a", t.dark_ref_current_a);
      r.get("dark_scale_a", t.dark_scale_a);
      r.get("dead_time_s", t.dead_time_s);
      std::string model = to_string(t.dead_time_model);
      r.get("dead_time_model", model);
      t.dead_time_model = dead_time_model_from_string(model);
      r.get("ps", t.ps);
      r.get("pol_axis", t.pol_axis);
      r.finish();
    }
    if (const json* c = top.sub("controller")) {
      ObjectReader r(*c, "controller");
      r.get("transmission_ripple", s.controller.transmission_ripple);
      r.get("read_noise_rel", s.controller.read_noise_rel);
      r.finish();
    }
    if (const json* n = top.sub("nonlin")) {
      ObjectReader r(*n, "nonlin");
      r.get("reads", s.nonlin.reads);
      r.finish();
    }
    if (const json* n = top.sub("switch_cal")) {
      ObjectReader r(*n, "switch_cal");
      r.get("reads", s.switch_cal.reads);
      r.get("range_dbm", s.switch_cal.range_dbm);
      r.finish();
    }
    if (const json* n = top.sub("atten_cal")) {
      ObjectReader r(*n, "atten_cal");
      r.get("reads", s.atten_cal.reads);
      r.get("att_db", s.atten_cal.att_db);
      r.get("range_dbm", s.atten_cal.range_dbm);
      r.finish();
    }
    if (const json* n = top.sub("sde")) {
      ObjectReader r(*n, "sde");
      r.get("bias_stop_v", s.sde.bias_stop_v);
      r.get("bias_step_v", s.sde.bias_step_v);
      r.get("pol_bias_v", s.sde.pol_bias_v);
      r.get("gates", s.sde.gates);
      r.get("gate_s", s.sde.gate_s);
      r.get("optimizer_iterations", s.sde.optimizer_iterations);
      r.finish();
    }
    if (const json* n = top.sub("polscan")) {
      ObjectReader r(*n, "polscan");
      if (const json* g = r.sub("grid")) {
        ObjectReader rg(*g, "polscan.grid");
        rg.get("qwp_start_deg", s.polscan.grid.qwp_start_deg);
        rg.get("qwp_span_deg", s.polscan.grid.qwp_span_deg);
        rg.get("hwp_start_deg", s.polscan.grid.hwp_start_deg);
        rg.get("hwp_span_deg", s.polscan.grid.hwp_span_deg);
        rg.get("steps", s.polscan.grid.steps);
        rg.finish();
      }
      r.get("att_db", s.polscan.att_db);
      r.get("bias_v", s.polscan.bias_v);
      r.get("gates", s.polscan.gates);
      r.get("gate_s", s.polscan.gate_s);
      r.get("dark_per_point", s.polscan.dark_per_point);
      r.get("settle_s", s.polscan.settle_s);
      r.finish();
    }
    if (const json* n = top.sub("stability")) {
      ObjectReader r(*n, "stability");
      r.get("duration_s", s.stability.duration_s);
      r.get("sample_rate_hz", s.stability.sample_rate_hz);
      r.get("meter_noise_rel", s.stability.meter_noise_rel);
      r.finish();
    }
    top.finish();
    s.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(e.what());
  } catch (const json::exception& e) {
    throw DataError(std::string("scenario: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("scenario: non-numeric map key");
  }
  return s;
}

}  // namespace sdem
