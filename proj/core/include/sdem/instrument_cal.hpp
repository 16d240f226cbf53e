#pragma once

// Optical switch and attenuator calibration at classical light levels.

#include <array>
#include <map>
#include <span>
#include <vector>

#include "sdem/instrument.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/uncertainty.hpp"

namespace sdem {

/// Wavelengths are compared with this tolerance throughout.
inline constexpr double kWavelengthToleranceNm = 1e-6;

bool same_wavelength(double a_nm, double b_nm) noexcept;

/// Throws DataError ("calibration mismatch") when the two differ.
void require_same_wavelength(double a_nm, double b_nm, const char* what);

struct SwitchCalRecord {
  double wavelength_nm = 0.0;
  std::vector<double> cpm_readings;  // detector port, calibrated meter
  std::vector<double> mpm_readings;  // monitor port, monitoring meter
  RangeSetting range{};              // both meters
};

struct SwitchRatio {
  double wavelength_nm = 0.0;
  UncertainValue ratio;   // R_SW = <P_CPM> / <P_MPM>
  double mpm_level_w = 0.0;  // mean monitor reading the ratio was taken at
  RangeSetting range{};
};

struct SwitchRatioOptions {
  /// Lower bound on sigma / R_SW (0 disables the floor).
  double min_relative_sigma = 0.0;
  /// Readings whose (max - min) / mean exceeds this mark an unstable source.
  double max_spread = 0.05;
};

SwitchRatio switching_ratio(const SwitchCalRecord& rec, const SwitchRatioOptions& options = {});

/// Calibration factors of the reference meter: a reading at the calibrated
/// range is divided by CF_CPM(lambda) to give absolute power.
class CpmCalibration {
 public:
  void set(double wavelength_nm, UncertainValue factor);
  /// Throws DataError when no factor exists for the wavelength.
  const UncertainValue& at(double wavelength_nm) const;
  bool contains(double wavelength_nm) const noexcept;
  const std::map<double, UncertainValue>& table() const noexcept { return table_; }

 private:
  std::map<double, UncertainValue> table_;
};

struct AttenCalRecord {
  int attenuator_id = 1;                   // 1..3
  double nominal_setting_db = 0.0;
  double wavelength_nm = 0.0;
  std::vector<double> zero_readings;       // all attenuators at 0 dB
  RangeSetting zero_range{};               // -10 dBm
  std::vector<double> att_readings;        // this attenuator at nominal_setting_db
  RangeSetting att_range = RangeSetting::from_dbm(-30);
  std::array<double, 3> zero_phase_settings{0.0, 0.0, 0.0};
  std::array<double, 3> att_phase_settings{0.0, 0.0, 0.0};
};

/// Throws DataError when the record breaks its invariants (other two
/// attenuators not at 0 dB, empty or non-positive readings, ...).
void validate(const AttenCalRecord& rec);

struct AttenuatorCalibration {
  int attenuator_id = 1;
  double nominal_setting_db = 0.0;
  double wavelength_nm = 0.0;
  UncertainValue alpha;           // linear transmission relative to 0 dB
  UncertainValue zero_reading;    // mean raw reading, reference phase
  UncertainValue att_reading;     // mean raw reading, attenuated phase
  UncertainValue zero_power;      // zero_reading / CF_NL
  UncertainValue att_power;       // att_reading / CF_NL
  bool extrapolated = false;      // a CF_NL was evaluated outside its fitted span
};

/// Mean reading with its standard error as an independent base variable.
UncertainValue mean_reading(std::span<const double> readings);

/// alpha = [att / CF_NL(r_att)] / [zero / CF_NL(r_zero)] from two mean readings.
UncertainValue attenuation_ratio(const UncertainValue& zero_reading, RangeSetting zero_range,
                                 const UncertainValue& att_reading, RangeSetting att_range,
                                 const NonlinModel& model, bool* extrapolated = nullptr);

/// Throws DataError when the model lacks a range used by the record, and
/// DataError ("suspicious gain") when alpha exceeds 1 by more than 3 sigma.
AttenuatorCalibration calibrate_attenuator(const AttenCalRecord& rec, const NonlinModel& model);

}  // namespace sdem
