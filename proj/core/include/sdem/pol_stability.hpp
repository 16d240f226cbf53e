#pragma once

// Polarization sensitivity from waveplate-grid sweeps, and Allan deviation of
// a source power series.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdem/uncertainty.hpp"

namespace sdem {

/// Waveplate grid in front of a fixed linear polarizer. Angles run over
/// [start, start + span) in `steps` equal increments.
struct GridSpec {
  double qwp_start_deg = 0.0;
  double qwp_span_deg = 180.0;
  double hwp_start_deg = 0.0;
  double hwp_span_deg = 90.0;
  int steps = 21;

  double qwp_angle(int i) const noexcept { return qwp_start_deg + qwp_span_deg * i / steps; }
  double hwp_angle(int j) const noexcept { return hwp_start_deg + hwp_span_deg * j / steps; }
};

struct PolGridRecord {
  double qwp_deg = 0.0;
  double hwp_deg = 0.0;
  std::vector<std::int64_t> counts;   // one entry per gate
  double gate_s = 1.0;
  double cpm_w = 0.0;                 // through the controller, classical level
  double mpm_w = 0.0;                 // monitor tap at the same moment
  std::optional<std::int64_t> dark_counts;  // one gate, light blocked
};

struct CorrectedPoint {
  double qwp_deg = 0.0;
  double hwp_deg = 0.0;
  double transmission = 1.0;  // cpm/mpm, normalised to the grid maximum
  UncertainValue raw_rate;    // mean light rate minus dark
  UncertainValue rate;        // raw_rate / transmission
};

/// Throws DataError when a grid point is missing (naming its angles), when a
/// point lies outside the spec, or when a meter reading is not positive.
void validate_grid(std::span<const PolGridRecord> grid, const GridSpec& spec);

/// Per-point net rate divided by the normalised transmission. The dark rate
/// of a point is its own dark gate when present, `session_dark` otherwise.
std::vector<CorrectedPoint> transmission_correct(std::span<const PolGridRecord> grid,
                                                 const UncertainValue& session_dark,
                                                 const GridSpec& spec = {});

struct PolarizationResult {
  UncertainValue ps;
  std::size_t argmax = 0;
  std::size_t argmin = 0;
};

/// Max / min over the raw grid points, no interpolation. Throws DomainError
/// when the minimum is not positive.
PolarizationResult polarization_sensitivity(std::span<const CorrectedPoint> grid);

// --- source stability ------------------------------------------------------------

struct StabilitySeries {
  std::vector<double> readings_w;
  double sample_rate_hz = 0.0;
};

/// Builds a series from (timestamp, power) samples. Throws DataError when
/// the sampling is not uniform to 1% of the mean interval or has < 2 samples.
StabilitySeries make_stability_series(std::span<const double> timestamps_s,
                                      std::span<const double> readings_w);

/// Overlapping Allan deviation of y_i = reading_i / mean - 1 at each tau,
/// evaluated at m = round(tau * rate) samples. Throws InvalidArgument when a
/// tau is below 2 / rate or above span / 3.
std::vector<std::pair<double, double>> allan_deviation(const StabilitySeries& series,
                                                       std::span<const double> taus_s);

/// Least-squares slope of log(adev) against log(tau).
double log_log_slope(std::span<const std::pair<double, double>> adev);

}  // namespace sdem
