#pragma once

// In-memory analysis of a simulated bundle, the same chain the CLI runs on
// files: nonlinearity fit, switch ratio, attenuators, SDE.

#include <nlohmann/json.hpp>

#include "sdem/instrument_cal.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/sde_analysis.hpp"
#include "sdem/session_io.hpp"
#include "sdem/sim_harness.hpp"

namespace sdem::testing {

inline NonlinModel fit_bundle_nonlin(const SessionBundle& b, const NonlinFitOptions& o = {}) {
  const auto records = nonlin_records(b.nonlin);
  return range_discontinuity(fit_nonlinearity(records, o), records);
}

inline CalibrationBundle calibrate_bundle(const SessionBundle& b) {
  return {fit_bundle_nonlin(b), switching_ratio(switch_record(b.switch_cal)), cpm_calibration(b.certificate)};
}

inline SdeSession sde_session_of(const SessionBundle& b) {
  SdeSession s;
  s.wavelength_nm = b.wavelength_nm;
  s.counts = b.dark;
  s.counts.insert(s.counts.end(), b.maxpol.begin(), b.maxpol.end());
  s.counts.insert(s.counts.end(), b.minpol.begin(), b.minpol.end());
  s.atten = atten_records(b.sde_atten);
  s.att_db = s.atten.front().nominal_setting_db;
  s.att_range = s.atten.front().att_range;
  return s;
}

inline SdeResult analyze_bundle(const SessionBundle& b, const SdeOptions& o = {}) {
  return sde_curve(sde_session_of(b), calibrate_bundle(b), o);
}

/// Truth SDE of a phase at the given bias, as recorded by the simulator.
inline double truth_sde(const SessionBundle& b, const std::string& phase, double bias_v) {
  for (const auto& p : b.truth.at("sde").at("phases").at(phase).at("curve")) {
    if (std::abs(p.at("bias_v").get<double>() - bias_v) < 1e-9) return p.at("sde").get<double>();
  }
  return -1.0;
}

inline const SdePoint& point_at(const SdeResult& r, CountPhase phase, double bias_v) {
  const auto& pts = r.curves.at(phase);
  std::size_t best = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (std::abs(pts[i].bias_voltage_v - bias_v) < std::abs(pts[best].bias_voltage_v - bias_v)) best = i;
  }
  return pts[best];
}

}  // namespace sdem::testing
