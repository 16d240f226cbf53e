#pragma once

#include <array>
#include <compare>
#include <string>

namespace sdem {

/// Power-meter range setting in dBm. Only the six decade ranges of the
/// monitoring meter are admitted.
class RangeSetting {
 public:
  static constexpr std::array<int, 6> kAdmitted{-10, -20, -30, -40, -50, -60};

  /// The -10 dBm range.
  constexpr RangeSetting() = default;

  /// Throws InvalidArgument for anything outside kAdmitted.
  static RangeSetting from_dbm(int dbm);
  static bool is_admitted(int dbm) noexcept;

  constexpr int dbm() const noexcept { return dbm_; }

  /// Nominal full-scale power of the range: 10^(dBm/10) mW.
  double full_scale_w() const noexcept;

  /// The next less sensitive range (r + 10 dBm). Throws at -10 dBm.
  RangeSetting higher() const;
  bool is_top() const noexcept { return dbm_ == -10; }

  std::string to_string() const;

  friend constexpr auto operator<=>(RangeSetting, RangeSetting) = default;

 private:
  constexpr explicit RangeSetting(int dbm) : dbm_(dbm) {}
  int dbm_ = -10;
};

inline constexpr int kTopRangeDbm = -10;

/// Bias is applied through a series resistor, so the source voltage maps
/// linearly onto device current.
inline constexpr double kBiasResistorOhm = 100e3;

inline constexpr double bias_current_a(double bias_voltage_v) noexcept {
  return bias_voltage_v / kBiasResistorOhm;
}

}  // namespace sdem
