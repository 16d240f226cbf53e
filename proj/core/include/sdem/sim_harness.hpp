#pragma once

// Virtual laboratory: runs the acquisition sequences against a SimScenario
// and emits the same session files a real setup would, plus a sealed
// ground-truth document that analysis code never opens.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdem/session_io.hpp"
#include "sdem/sim_scenario.hpp"

namespace sdem {

struct SessionBundle {
  std::string session_id;
  double wavelength_nm = 0.0;
  std::vector<NonlinRow> nonlin;
  std::vector<SwitchRow> switch_cal;
  std::vector<AttenRow> atten_cal;
  std::vector<CountRecord> dark;
  std::vector<CountRecord> maxpol;
  std::vector<CountRecord> minpol;
  std::vector<AttenRow> sde_atten;
  std::vector<PolGridRecord> polscan;
  std::optional<GridSpec> polscan_grid;
  std::vector<StabilitySample> stability;
  std::vector<CertificateRow> certificate;
  std::vector<std::string> warnings;
  double duration_s = 0.0;
  nlohmann::json truth = nlohmann::json::object();

  /// Appends every file set of `other` that this bundle lacks.
  void merge(SessionBundle other);
};

/// Instruments of the virtual laboratory sharing one clock and one random
/// stream. Everything downstream of the seed is deterministic.
class VirtualLab {
 public:
  enum class Route { kMonitor, kDetector };

  VirtualLab(const SimScenario& scenario, std::uint64_t stream);

  const SimScenario& scenario() const noexcept { return s_; }
  double now_s() const noexcept { return t_; }
  void advance(double seconds);

  double laser_w() const noexcept;
  /// True CF_CPM of this laboratory (drawn from the certificate).
  double cpm_cf_true() const noexcept { return cpm_cf_; }

  void set_attenuators(const std::array<double, 3>& db);
  void set_attenuator(int id, double db);
  const std::array<double, 3>& attenuators() const noexcept { return att_db_; }
  void enable_attenuators(bool on) noexcept { att_enabled_ = on; }
  void set_route(Route r) noexcept { route_ = r; }
  void set_range(int range_dbm);
  int range() const noexcept { return range_dbm_; }
  void set_bias(double volts) noexcept { bias_v_ = volts; }

  /// Stokes direction delivered to the detector.
  void set_polarization(const std::array<double, 3>& stokes, double transmission = 1.0) noexcept;
  const std::array<double, 3>& polarization() const noexcept { return stokes_; }

  /// Optical power at the current output port, before the detector.
  double port_power_w() const;

  /// One monitoring-meter reading at the current range (zero offset
  /// included, as the meter reports it).
  double mpm_read();
  /// One calibrated-meter reading at the detector port.
  double cpm_read();
  /// One gate of registered counts.
  std::int64_t count_gate(double gate_s);

  /// Expected registered rate (no noise, no dead time) at the current state.
  double detection_rate() const;

  std::mt19937_64& rng() noexcept { return rng_; }

 private:
  double gauss() { return normal_(rng_); }

  SimScenario s_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double t_ = 0.0;
  double drift_ = 0.0;
  double cpm_cf_ = 1.0;
  std::array<double, 3> att_db_{0.0, 0.0, 0.0};
  bool att_enabled_ = true;
  Route route_ = Route::kMonitor;
  int range_dbm_ = -10;
  double bias_v_ = 0.0;
  std::array<double, 3> stokes_{1.0, 0.0, 0.0};
  double pol_transmission_ = 1.0;
};

/// Stokes vector of horizontally polarized light after a quarter-wave and
/// then a half-wave plate with fast axes at the given angles.
std::array<double, 3> waveplate_stokes(double qwp_deg, double hwp_deg);

/// Stokes direction of the all-fiber controller at (latitude, longitude).
std::array<double, 3> fiber_controller_stokes(double lat_deg, double lon_deg);

/// Free-space controller transmission at the given waveplate angles.
double waveplate_transmission(double ripple, double qwp_deg, double hwp_deg);

std::vector<double> bias_grid(const SdePlan& plan);

// Algorithms 1-3 and the auxiliary sequences, each on a fresh laboratory.
SessionBundle run_nonlin_acquisition(const SimScenario& s, double wavelength_nm);
SessionBundle run_switch_cal(const SimScenario& s);
SessionBundle run_attenuator_cal(const SimScenario& s, double att_db, RangeSetting range);
SessionBundle run_sde_session(const SimScenario& s, std::span<const double> bias_grid_v, double att_db,
                              RangeSetting range);
SessionBundle run_polscan(const SimScenario& s, const GridSpec& grid);
SessionBundle run_stability(const SimScenario& s);

// The same sequences on a shared laboratory.
SessionBundle run_nonlin_acquisition(VirtualLab& lab, double wavelength_nm);
SessionBundle run_switch_cal(VirtualLab& lab);
SessionBundle run_attenuator_cal(VirtualLab& lab, double att_db, RangeSetting range);
SessionBundle run_sde_session(VirtualLab& lab, std::span<const double> bias_grid_v, double att_db, RangeSetting range);
SessionBundle run_polscan(VirtualLab& lab, const GridSpec& grid);
SessionBundle run_stability(VirtualLab& lab);

struct SimulateOptions {
  bool nonlin = true;
  bool switch_cal = true;
  bool atten_cal = true;
  bool sde = true;
  bool polscan = true;
  bool stability = true;
};

/// Every sequence in acquisition order on one laboratory.
SessionBundle simulate_session(const SimScenario& s, const SimulateOptions& options = {});

/// Sealed ground truth lives in this subdirectory of a written session.
inline constexpr const char* kTruthDir = "truth";

/// Writes the CSV files, session.json and truth/ground_truth.json.
void write_bundle(const SessionBundle& b, const std::filesystem::path& dir);

/// Registered / incident fraction of a dead-time counter driven by
/// `arrivals` Poisson arrivals at `rate`.
double simulate_dead_time_fraction(double rate, double dead_time_s, DeadTimeModel model, std::uint64_t arrivals,
                                   std::uint64_t seed);

}  // namespace sdem
