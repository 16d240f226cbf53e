#include "sdem/instrument.hpp"

#include <algorithm>
#include <cmath>

#include "sdem/errors.hpp"

namespace sdem {

bool RangeSetting::is_admitted(int dbm) noexcept {
  return std::find(kAdmitted.begin(), kAdmitted.end(), dbm) != kAdmitted.end();
}

RangeSetting RangeSetting::from_dbm(int dbm) {
  if (!is_admitted(dbm)) {
    throw InvalidArgument("range setting " + std::to_string(dbm) +
                          " dBm is not one of -10, -20, -30, -40, -50, -60");
  }
  return RangeSetting(dbm);
}

double RangeSetting::full_scale_w() const noexcept { return 1e-3 * std::pow(10.0, dbm_ / 10.0); }

RangeSetting RangeSetting::higher() const {
  if (is_top()) throw InvalidArgument("-10 dBm is the highest range");
  return RangeSetting(dbm_ + 10);
}

std::string RangeSetting::to_string() const { return std::to_string(dbm_) + " dBm"; }

}  // namespace sdem
