#include "sdem/instrument_cal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sdem/errors.hpp"

namespace sdem {

namespace {

void require_positive(std::span<const double> xs, const std::string& what) {
  if (xs.empty()) throw DataError(what + ": no readings");
  for (double x : xs) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DataError(what + ": readings must be > 0");
  }
}

double spread(std::span<const double> xs) {
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  return (*hi - *lo) / m;
}

}  // namespace

bool same_wavelength(double a_nm, double b_nm) noexcept {
  return std::abs(a_nm - b_nm) <= kWavelengthToleranceNm;
}

void require_same_wavelength(double a_nm, double b_nm, const char* what) {
  if (!same_wavelength(a_nm, b_nm)) {
    std::ostringstream os;
    os << "calibration mismatch: " << what << " at " << a_nm << " nm vs " << b_nm << " nm";
    throw DataError(os.str());
  }
}

UncertainValue mean_reading(std::span<const double> readings) {
  if (readings.empty()) throw DataError("mean of an empty reading list");
  const auto n = static_cast<double>(readings.size());
  const double m = std::accumulate(readings.begin(), readings.end(), 0.0) / n;
  double se = 0.0;
  if (readings.size() > 1) {
    double ss = 0.0;
    for (double x : readings) ss += (x - m) * (x - m);
    se = std::sqrt(ss / (n - 1.0) / n);
  }
  return UncertainValue::lift(m, se);
}

SwitchRatio switching_ratio(const SwitchCalRecord& rec, const SwitchRatioOptions& options) {
  require_positive(rec.cpm_readings, "switch calibration (CPM)");
  require_positive(rec.mpm_readings, "switch calibration (MPM)");
  for (const auto* list : {&rec.cpm_readings, &rec.mpm_readings}) {
    const double s = spread(*list);
    if (s > options.max_spread) {
      std::ostringstream os;
      os << "unstable source during switch calibration: readings spread " << 100.0 * s << "% (limit "
         << 100.0 * options.max_spread << "%)";
      throw DataError(os.str());
    }
  }
  SwitchRatio out;
  out.wavelength_nm = rec.wavelength_nm;
  out.range = rec.range;
  const UncertainValue cpm = mean_reading(rec.cpm_readings);
  const UncertainValue mpm = mean_reading(rec.mpm_readings);
  out.mpm_level_w = mpm.value();
  out.ratio = cpm / mpm;
  const double floor = options.min_relative_sigma * std::abs(out.ratio.value());
  if (out.ratio.sigma() < floor) {
    const double extra = std::sqrt(floor * floor - out.ratio.variance());
    out.ratio = out.ratio + UncertainValue::lift(0.0, extra);
  }
  return out;
}

void CpmCalibration::set(double wavelength_nm, UncertainValue factor) {
  if (!(factor.value() > 0.0)) throw InvalidArgument("CF_CPM must be > 0");
  table_.insert_or_assign(wavelength_nm, std::move(factor));
}

const UncertainValue& CpmCalibration::at(double wavelength_nm) const {
  for (const auto& [wl, cf] : table_) {
    if (same_wavelength(wl, wavelength_nm)) return cf;
  }
  std::ostringstream os;
  os << "calibration mismatch: no CPM calibration factor at " << wavelength_nm << " nm";
  throw DataError(os.str());
}

bool CpmCalibration::contains(double wavelength_nm) const noexcept {
  return std::any_of(table_.begin(), table_.end(),
                     [&](const auto& kv) { return same_wavelength(kv.first, wavelength_nm); });
}

void validate(const AttenCalRecord& rec) {
  const std::string who = "attenuator " + std::to_string(rec.attenuator_id) + " calibration";
  if (rec.attenuator_id < 1 || rec.attenuator_id > 3) throw DataError(who + ": id must be 1..3");
  require_positive(rec.zero_readings, who + " (reference phase)");
  require_positive(rec.att_readings, who + " (attenuated phase)");
  for (int i = 0; i < 3; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (rec.zero_phase_settings[idx] != 0.0) {
      throw DataError(who + ": attenuator " + std::to_string(i + 1) +
                      " not at 0 dB during the reference phase");
    }
    if (i + 1 != rec.attenuator_id && rec.att_phase_settings[idx] != 0.0) {
      throw DataError(who + ": attenuator " + std::to_string(i + 1) +
                      " not at 0 dB during the attenuated phase");
    }
  }
}

UncertainValue attenuation_ratio(const UncertainValue& zero_reading, RangeSetting zero_range,
                                 const UncertainValue& att_reading, RangeSetting att_range,
                                 const NonlinModel& model, bool* extrapolated) {
  const NonlinCorrection cf_zero = nonlin_correction(model, zero_range, zero_reading.value());
  const NonlinCorrection cf_att = nonlin_correction(model, att_range, att_reading.value());
  if (extrapolated) *extrapolated = cf_zero.extrapolated || cf_att.extrapolated;
  return (att_reading / cf_att.factor) / (zero_reading / cf_zero.factor);
}

AttenuatorCalibration calibrate_attenuator(const AttenCalRecord& rec, const NonlinModel& model) {
  validate(rec);
  require_same_wavelength(rec.wavelength_nm, model.wavelength_nm, "attenuator record vs nonlinearity model");
  for (RangeSetting r : {rec.zero_range, rec.att_range}) {
    if (!model.has_range(r)) {
      throw DataError("attenuator " + std::to_string(rec.attenuator_id) +
                      " calibration depends on a nonlinearity fit for " + r.to_string() +
                      ", which the model lacks");
    }
  }

  AttenuatorCalibration out;
  out.attenuator_id = rec.attenuator_id;
  out.nominal_setting_db = rec.nominal_setting_db;
  out.wavelength_nm = rec.wavelength_nm;
  out.zero_reading = mean_reading(rec.zero_readings);
  out.att_reading = mean_reading(rec.att_readings);
  const NonlinCorrection cf_zero = nonlin_correction(model, rec.zero_range, out.zero_reading.value());
  const NonlinCorrection cf_att = nonlin_correction(model, rec.att_range, out.att_reading.value());
  out.extrapolated = cf_zero.extrapolated || cf_att.extrapolated;
  out.zero_power = out.zero_reading / cf_zero.factor;
  out.att_power = out.att_reading / cf_att.factor;
  out.alpha = out.att_power / out.zero_power;

  if (out.alpha.value() > 1.0 + 3.0 * out.alpha.sigma()) {
    std::ostringstream os;
    os << "suspicious gain: attenuator " << rec.attenuator_id << " calibrated to alpha = "
       << to_string(out.alpha) << " (> 1 by more than 3 sigma)";
    throw DataError(os.str());
  }
  return out;
}

}  // namespace sdem
