#pragma once

// Monitoring power-meter nonlinearity calibration.
//
// Within a range the meter is linearised by P_r(V) = V + sum_{k>=2} b_k V^k,
// fitted jointly over all ranges together with the true transmission tau of
// a nominal 3 dB attenuator step: P_r(V_tau) = tau * P_r(V) at every att1
// setting. Readings at identical attenuator settings on adjacent ranges then
// give range-discontinuity factors RF(r), chained up to the -10 dBm range.
//
// Coefficients are stored for readings normalised to the range full scale,
// u = V / FS_r, so that b_k V^k = beta_k FS_r u^k with beta_k = b_k FS_r^(k-1).

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdem/instrument.hpp"
#include "sdem/uncertainty.hpp"

namespace sdem {

// --- acquisition schedule ---------------------------------------------------

struct ScheduleEntry {
  double att1_db = 0.0;
  double att2_db = 0.0;
  RangeSetting range{};
  double requested_att1_db = 0.0;  // before clamping at 0 dB
  bool clamped = false;
};

struct NonlinSchedule {
  std::vector<ScheduleEntry> entries;  // acquisition order
  int reads_per_setting = 10;
  std::vector<std::string> warnings;
};

/// Relative power levels of the sweep: 20, 15, then 10 down to 1.0 in steps of
/// 0.5, then 0.95.
std::vector<double> nonlin_sweep_levels();

/// round(10 - 10 log10(level)), shifted so its minimum is 0.
std::vector<int> nonlin_base_settings();

/// att1 settings for one range before clamping: base - (r + 10) - 3.
std::vector<int> nonlin_att1_settings(RangeSetting r);

/// Full acquisition schedule. Negative att1 settings are clamped to 0 dB and
/// reported in `warnings`.
NonlinSchedule plan_nonlin_sweep(std::span<const RangeSetting> ranges);

// --- records ------------------------------------------------------------------

inline constexpr double kAtt2Off = 0.0;
inline constexpr double kAtt2On = 3.0;

struct NonlinRecord {
  double att1_db = 0.0;
  double att2_db = 0.0;  // exactly kAtt2Off or kAtt2On
  RangeSetting range{};
  double reading_w = 0.0;  // zero offset already removed, > 0
  double wavelength_nm = 0.0;
};

/// Throws DataError when a record violates the NonlinRecord invariants.
void validate(const NonlinRecord& rec);

// --- model --------------------------------------------------------------------

struct RangeFit {
  RangeSetting range{};
  double full_scale_w = 0.0;
  int order = 1;                        // N_r; coefficients hold k = 2..order
  std::vector<UncertainValue> beta;     // normalised beta_k, index 0 -> k = 2
  double span_min_w = 0.0;              // smallest mean reading fitted
  double span_max_w = 0.0;              // largest mean reading fitted
  std::size_t settings = 0;             // distinct att1 settings with both att2 states
  std::vector<double> order_reduced_chi2;  // reduced chi2 per candidate order (1-based index - 1)
};

struct NonlinCorrection {
  UncertainValue factor;  // CF_NL; a reading is corrected by dividing by it
  bool extrapolated = false;
};

struct NonlinModel {
  double wavelength_nm = 0.0;
  UncertainValue tau;
  std::map<int, RangeFit> ranges;   // keyed by dBm
  std::map<int, UncertainValue> rf; // keyed by dBm; rf[-10] == 1 exactly
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  std::string source_digest;

  double reduced_chi2() const noexcept { return dof > 0 ? chi2 / dof : 0.0; }
  bool has_range(RangeSetting r) const noexcept { return ranges.contains(r.dbm()); }
  const RangeFit& range_fit(RangeSetting r) const;

  /// P_r(v) in watts. The reading may itself carry uncertainty; derivatives
  /// with respect to both the reading and the coefficients are tracked.
  UncertainValue linearized(RangeSetting r, const UncertainValue& reading_w) const;
  double linearized_value(RangeSetting r, double reading_w) const;

  /// Product of RF(r') for r' = r, r+10, ..., -20 dBm (1 at -10 dBm).
  UncertainValue rf_chain(RangeSetting r) const;

  /// True when v lies inside the fitted span of range r.
  bool in_span(RangeSetting r, double reading_w) const;

  /// Every parameter (tau, all beta, all RF except the fixed -10 dBm entry)
  /// in a stable order, with labels. Used for serialisation.
  std::vector<std::pair<std::string, UncertainValue>> parameters() const;
};

// --- fitting ------------------------------------------------------------------

enum class OrderSelection {
  /// Order with the smallest reduced chi-square, ties to the lower order.
  kMinReducedChiSquare,
  /// Reduced chi-square, but a higher order must beat the best lower order
  /// by an F-test at `significance`; otherwise the lower order is kept.
  kSignificantReducedChiSquare,
};

struct NonlinFitOptions {
  int max_order = 5;
  OrderSelection selection = OrderSelection::kSignificantReducedChiSquare;
  double significance = 0.001;
  int max_iterations = 200;
  int selection_passes = 3;
  bool scale_covariance = true;  // scale by reduced chi-square
  /// Force an order for some ranges (dBm -> N_r); skips selection for them.
  std::map<int, int> fixed_orders;
};

/// Per-(range, att1) pair of mean readings used by the fit.
struct NonlinGroup {
  RangeSetting range{};
  double att1_db = 0.0;
  double mean_off_w = 0.0;  // att2 at 0 dB
  double mean_on_w = 0.0;   // att2 at 3 dB
  double se_off_w = 0.0;
  double se_on_w = 0.0;
  std::size_t n_off = 0;
  std::size_t n_on = 0;
};

std::vector<NonlinGroup> group_nonlin_records(std::span<const NonlinRecord> records);

/// Joint fit of every range polynomial and tau. Throws DataError on
/// insufficient data and FitFailure when the solver does not converge.
NonlinModel fit_nonlinearity(std::span<const NonlinRecord> records,
                             const NonlinFitOptions& options = {});

struct RangeDiscontinuityOptions {
  bool weighted = false;  // inverse-variance mean instead of the plain average
};

/// Fills `rf` from readings taken at identical (att1, att2) settings on
/// adjacent ranges. Throws DataError naming the pair when a pair has no
/// overlapping setting.
NonlinModel range_discontinuity(NonlinModel model, std::span<const NonlinRecord> records,
                                const RangeDiscontinuityOptions& options = {});

/// CF_NL(r, v) = v / P_r(v) * prod RF. Throws DomainError for v outside
/// [span_min / 2, 2 span_max]; inside that but outside the span the result is
/// flagged as extrapolated.
NonlinCorrection nonlin_correction(const NonlinModel& model, RangeSetting r, double reading_w);

/// Reading divided by CF_NL, with the reading's own uncertainty carried.
UncertainValue corrected_power(const NonlinModel& model, RangeSetting r,
                               const UncertainValue& reading_w);

}  // namespace sdem
