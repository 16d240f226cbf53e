#pragma once

// System detection efficiency from count records and calibrated optics.
//
//   N_photons = P_DP * alpha_1 * alpha_2 * alpha_3 * lambda / (h c)
//   SDE       = (<CR> - <DCR>) / N_photons
//
// Every input is an UncertainValue, so the SDE uncertainty is the full
// first-order propagation over shared base variables; with independent
// inputs it reduces to the familiar quadrature of relative terms.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdem/instrument.hpp"
#include "sdem/instrument_cal.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/uncertainty.hpp"

namespace sdem {

// CODATA 2018 (exact in the SI).
inline constexpr double kPlanckJs = 6.62607015e-34;
inline constexpr double kSpeedOfLightMps = 299792458.0;

/// Energy of one photon at the given vacuum wavelength, in joules.
inline constexpr double photon_energy_j(double wavelength_nm) noexcept {
  return kPlanckJs * kSpeedOfLightMps / (wavelength_nm * 1e-9);
}

enum class CountPhase { kDark, kMaxPol, kMinPol };

std::string to_string(CountPhase p);
/// Accepts "dark", "maxpol", "minpol". Throws InvalidArgument otherwise.
CountPhase count_phase_from_string(const std::string& s);

struct CountRecord {
  double bias_voltage_v = 0.0;
  CountPhase phase = CountPhase::kDark;
  std::int64_t counts = 0;
  int repetition = 1;  // 1..N
  double gate_s = 1.0;
};

struct PhotonFlux {
  UncertainValue p_dp;                 // W, attenuators at 0 dB
  std::array<UncertainValue, 3> alpha;
  double wavelength_nm = 0.0;
  UncertainValue rate;                 // photons / s with attenuators applied
};

/// Which way the switch ratio enters the detector-port power.
enum class PowerOrientation {
  /// P_DP = P_MPM / CF_NL * R_SW * CF_NL(switch level) / CF_CPM. Follows from
  /// R_SW = P_CPM / P_MPM and is what the instrument simulator reproduces.
  kFromSwitchRatio,
  /// P_DP = P_MPM / R_SW / CF_CPM / CF_NL, the older division form. Kept
  /// for comparison with legacy results only.
  kLegacyDivide,
};

/// Absolute power exiting the detector port with all attenuators at 0 dB.
/// Throws DataError on a wavelength mismatch between the inputs.
UncertainValue detector_port_power(const UncertainValue& mpm_reading_w, const NonlinModel& model,
                                   RangeSetting range, const SwitchRatio& sw,
                                   const CpmCalibration& cpm,
                                   PowerOrientation orientation = PowerOrientation::kFromSwitchRatio);

/// Throws InvalidArgument when an input is not positive.
PhotonFlux photon_rate(const UncertainValue& p_dp_w, const UncertainValue& alpha1,
                       const UncertainValue& alpha2, const UncertainValue& alpha3,
                       double wavelength_nm);

struct RateAtBias {
  double bias_voltage_v = 0.0;
  UncertainValue rate;  // counts / s
  std::size_t gates = 0;
};

/// Time-averaged count rate per bias point of one phase. The uncertainty is
/// the quadrature of the Poisson deviation of the mean rate, sqrt(<R> / (N T)),
/// and the standard error of the N gate rates.
std::vector<RateAtBias> mean_count_rate(std::span<const CountRecord> records, CountPhase phase);

/// <CR> - <DCR> per bias. Throws DataError when the bias grids differ.
std::vector<RateAtBias> net_count_rate(std::span<const RateAtBias> light,
                                       std::span<const RateAtBias> dark);

/// SDE = net / flux.rate.
UncertainValue sde_estimate(const UncertainValue& net_rate, const PhotonFlux& flux);

enum class DeadTimeModel { kParalyzable, kNonParalyzable };

std::string to_string(DeadTimeModel m);
DeadTimeModel dead_time_model_from_string(const std::string& s);

/// Fraction of incident events registered by a counter with the given dead
/// time: exp(-R t) (paralyzable) or 1 / (1 + R t) (non-paralyzable).
double pileup_max_sde(double input_rate, double dead_time_s,
                      DeadTimeModel model = DeadTimeModel::kParalyzable);

// --- full session ---------------------------------------------------------------

struct SdeSession {
  double wavelength_nm = 0.0;
  double att_db = 31.0;
  RangeSetting att_range = RangeSetting::from_dbm(-30);
  std::vector<CountRecord> counts;
  std::vector<AttenCalRecord> atten;  // one per attenuator, embedded calibration
};

struct CalibrationBundle {
  NonlinModel nonlin;
  SwitchRatio sw;
  CpmCalibration cpm;
};

struct SdeOptions {
  PowerOrientation orientation = PowerOrientation::kFromSwitchRatio;
  /// Keep the base variables shared between the attenuator calibration and
  /// P_DP (they come from the same meter readings). When false every
  /// calibrated quantity enters as an independent value.
  bool shared_mpm = true;
  DeadTimeModel pileup_model = DeadTimeModel::kParalyzable;
  double dead_time_s = 175e-9;
};

struct SdePoint {
  double bias_voltage_v = 0.0;
  double bias_current_a = 0.0;
  UncertainValue sde;
  UncertainValue net_rate;
  UncertainValue light_rate;
  UncertainValue dark_rate;
};

/// Relative standard uncertainties of the main inputs, mirroring a
/// conventional error-budget table.
struct BudgetBreakdown {
  double cf_cpm = 0.0;
  double cf_nl = 0.0;
  double switch_ratio = 0.0;
  std::array<double, 3> alpha{};
  double mpm = 0.0;
  double p_dp = 0.0;
  double counting = 0.0;
  double total = 0.0;
};

struct SdeResult {
  double wavelength_nm = 0.0;
  PhotonFlux flux;
  std::array<AttenuatorCalibration, 3> attenuators;
  UncertainValue mpm_reading;  // mean reference-phase reading used for P_DP
  UncertainValue cf_cpm;
  UncertainValue switch_ratio;
  UncertainValue cf_nl_att;    // CF_NL at the attenuated-phase level
  std::map<CountPhase, std::vector<SdePoint>> curves;  // maxpol, minpol
  SdeOptions options;
  double pileup_bound = 1.0;   // at the measured flux
  std::vector<std::string> warnings;

  /// Budget at the bias point closest to `bias_voltage_v` of `phase`.
  BudgetBreakdown budget(CountPhase phase, double bias_voltage_v) const;
};

/// Throws DataError listing the absent phases when the session lacks dark,
/// maxpol or minpol counts, or lacks the embedded attenuator calibration.
SdeResult sde_curve(const SdeSession& session, const CalibrationBundle& calib,
                    const SdeOptions& options = {});

// --- analytic budget composition ---------------------------------------------------

struct BudgetInputs {
  double cf_cpm_rel = 0.0014;
  double cf_nl_rel = 0.00075;
  double switch_ratio_rel = 0.0014;
  double alpha_rel = 0.002;
  double mpm_rel = 0.001;
  double light_rate_cps = 2.3e5;
  double dark_rate_cps = 1e4;
  int gates = 10;
  double gate_s = 1.0;
  /// Numerical standard deviation of the gates as a multiple of the
  /// Poisson value; it is added in quadrature.
  double numerical_to_poisson = 1.0;
};

/// Composes the SDE relative uncertainty from independent relative inputs by
/// running the actual propagation chain on lifted values.
BudgetBreakdown compose_error_budget(const BudgetInputs& in);

/// sigma_alpha / alpha from four independent relative inputs: the two mean
/// readings and the two CF_NL factors.
double attenuator_relative_sigma(double mpm_ref_rel, double mpm_att_rel, double nl_ref_rel,
                                 double nl_att_rel);

}  // namespace sdem
