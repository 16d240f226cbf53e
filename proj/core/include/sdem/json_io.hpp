#pragma once

// JSON documents produced and consumed by the toolkit. Floating-point
// numbers are always written with 17 significant digits.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdem/instrument_cal.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/pol_stability.hpp"
#include "sdem/sde_analysis.hpp"

namespace sdem {

/// Pretty-printed JSON with doubles as %.17g.
std::string dump_json(const nlohmann::json& j, int indent = 2);

nlohmann::json uv_json(const UncertainValue& x);

/// Coefficients, tau, RF table, fitted span, full parameter covariance and
/// the source digest.
nlohmann::json to_json(const NonlinModel& m);

/// Inverse of to_json. Parameter correlations are restored from the stored
/// covariance. Throws DataError on a malformed document.
NonlinModel nonlin_model_from_json(const nlohmann::json& j);

/// Calibration bundle on disk: the nonlinearity model, switch ratio, CPM
/// factors and the attenuator calibrations made with them.
struct CalibrationFile {
  std::optional<NonlinModel> nonlin;
  std::optional<SwitchRatio> sw;
  CpmCalibration cpm;
  std::vector<AttenuatorCalibration> attenuators;
  std::string session_id;

  /// Throws DataError naming the missing part.
  CalibrationBundle bundle() const;
};

nlohmann::json to_json(const CalibrationFile& c);
CalibrationFile calibration_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SdeResult& r);
nlohmann::json to_json(const BudgetBreakdown& b);
nlohmann::json to_json(const PolarizationResult& r, const std::vector<CorrectedPoint>& grid, const GridSpec& spec);

/// Flat CSV of an SDE result: phase,bias_uA,sde,sigma.
std::string sde_csv(const SdeResult& r);

}  // namespace sdem
