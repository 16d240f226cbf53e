#pragma once

// Ground-truth description of the virtual laboratory.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdem/pol_stability.hpp"
#include "sdem/sde_analysis.hpp"

namespace sdem {

enum class DriftModel { kNone, kLinear, kRandomWalk };

std::string to_string(DriftModel m);
DriftModel drift_model_from_string(const std::string& s);

struct LaserTruth {
  double power_w = 1.04e-4;
  DriftModel drift = DriftModel::kRandomWalk;
  double linear_ppm_per_hour = 0.0;
  /// Fractional random walk, sigma per sqrt(second). With 0.1 % white meter
  /// noise at 4.118 Hz this gives an Allan deviation of about 9.3e-4 at 10 s.
  double random_walk_per_sqrt_s = 5.0e-4;
};

/// True transmission of one step attenuator. A nominal setting of d dB
/// transmits 10^(-d/10) (1 + error_per_db * d) unless listed in `overrides`.
struct AttenuatorTruth {
  double error_per_db = 0.0;
  std::map<double, double> overrides;  // nominal dB -> linear transmission

  double transmission(double nominal_db) const;
};

struct MeterRangeTruth {
  /// Normalised nonlinearity, index 0 -> u^2: P(V) = V + FS sum beta_k u^k.
  std::vector<double> beta;
  double zero_offset_w = 0.0;
};

struct MpmTruth {
  double gain = 1.0;
  std::map<int, MeterRangeTruth> ranges;  // all six ranges
  /// Reading ratio across the boundary r / r + 10 for the same incident
  /// power, keyed by r (-20 ... -60).
  std::map<int, double> discontinuity;
  double read_noise_rel = 7.5e-4;
  double noise_floor_rel_fs = 2e-6;

  /// Reading scale of range r relative to incident power.
  double scale(int range_dbm) const;
  /// Noiseless reading (before the zero offset) for incident power p.
  double reading(int range_dbm, double incident_w) const;
  /// True linearised power P_r(v) for a reading v (offset removed).
  double linearized(int range_dbm, double reading_w) const;
  /// True CF_NL(r, v): v / P_r(v) times the discontinuity chain.
  double cf_nl(int range_dbm, double reading_w) const;
};

struct CpmTruth {
  double cf_certificate = 1.0;      // certificate value of CF_CPM
  double cf_rel_sigma = 0.0014;     // certificate standard uncertainty
  double read_noise_rel = 1e-4;
  /// Draw the true factor from the certificate distribution per seed.
  bool perturb_cf = true;
};

struct DetectorTruth {
  double sde_plateau = 0.965;
  double i_sat_a = 3.0e-6;
  double width_a = 0.5e-6;
  double dark_ref_cps = 1e4;
  double dark_ref_current_a = 5.0e-6;
  double dark_scale_a = 0.5e-6;
  double dead_time_s = 175e-9;
  DeadTimeModel dead_time_model = DeadTimeModel::kParalyzable;
  double ps = 1.02;
  /// Stokes direction of maximum efficiency (normalised on use).
  std::array<double, 3> pol_axis{0.3, 0.5, 0.8124038404635961};

  double sde(double bias_current_a) const;
  double dark_rate(double bias_current_a) const;
  /// Efficiency factor for the Stokes direction s, in [1/ps, 1].
  double pol_factor(const std::array<double, 3>& stokes) const;
};

struct ControllerTruth {
  /// Peak-to-peak fractional transmission ripple of the free-space waveplates.
  double transmission_ripple = 0.02;
  /// Relative noise of the classical transmission readings.
  double read_noise_rel = 2e-4;
};

struct NonlinPlan {
  int reads = 10;
};

struct SwitchPlan {
  int reads = 10;
  int range_dbm = -10;
};

struct AttenPlan {
  int reads = 5;
  double att_db = 31.0;
  int range_dbm = -30;
};

struct SdePlan {
  double bias_stop_v = 0.6;
  double bias_step_v = 0.025;
  double pol_bias_v = 0.5;
  int gates = 10;
  double gate_s = 1.0;
  int optimizer_iterations = 40;
};

struct PolscanPlan {
  GridSpec grid;
  std::array<double, 3> att_db{31.0, 31.0, 30.4};
  double bias_v = 0.5;
  int gates = 2;
  double gate_s = 1.0;
  bool dark_per_point = true;
  double settle_s = 0.25;
};

struct StabilityPlan {
  double duration_s = 3600.0;
  double sample_rate_hz = 4.118;
  double meter_noise_rel = 1e-3;
};

struct SimScenario {
  std::string name = "default";
  std::uint64_t seed = 1;
  double wavelength_nm = 1550.0;
  LaserTruth laser;
  std::array<AttenuatorTruth, 3> attenuators;
  double switch_monitor = 0.5;
  double switch_detector = 0.49;
  MpmTruth mpm;
  CpmTruth cpm;
  DetectorTruth detector;
  ControllerTruth controller;
  NonlinPlan nonlin;
  SwitchPlan switch_cal;
  AttenPlan atten_cal;
  SdePlan sde;
  PolscanPlan polscan;
  StabilityPlan stability;

  /// Throws InvalidArgument when an invariant fails (transmissions outside
  /// (0, 1], negative noise, SDE outside [0, 1], ...).
  void validate() const;
};

/// Named presets: "default", "paper-scale", "sde-oracle", "polscan-oracle",
/// "stability". Throws InvalidArgument for an unknown name.
SimScenario scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

/// Replaces the meter truth with a random one drawn from `seed`: orders 1..4
/// with at most 3 % nonlinearity, 0.2-0.5 % discontinuities and read noise
/// in [0.05 %, 0.1 %]. The 3 dB step keeps a true transmission of 0.5.
SimScenario with_random_meter(SimScenario s, std::uint64_t seed);

nlohmann::json to_json(const SimScenario& s);
/// Missing keys keep their defaults; unknown keys are rejected.
SimScenario scenario_from_json(const nlohmann::json& j);

}  // namespace sdem
