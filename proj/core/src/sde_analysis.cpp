#include "sdem/sde_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sdem/errors.hpp"

namespace sdem {

namespace {

constexpr double kBiasTolerance = 1e-9;

UncertainValue independent_copy(const UncertainValue& x) {
  return UncertainValue::lift(x.value(), x.sigma());
}

}  // namespace

std::string to_string(CountPhase p) {
  switch (p) {
    case CountPhase::kDark:
      return "dark";
    case CountPhase::kMaxPol:
      return "maxpol";
    case CountPhase::kMinPol:
      return "minpol";
  }
  return "?";
}

CountPhase count_phase_from_string(const std::string& s) {
  if (s == "dark") return CountPhase::kDark;
  if (s == "maxpol") return CountPhase::kMaxPol;
  if (s == "minpol") return CountPhase::kMinPol;
  throw InvalidArgument("unknown count phase '" + s + "'");
}

std::string to_string(DeadTimeModel m) {
  return m == DeadTimeModel::kParalyzable ? "paralyzable" : "nonparalyzable";
}

DeadTimeModel dead_time_model_from_string(const std::string& s) {
  if (s == "paralyzable") return DeadTimeModel::kParalyzable;
  if (s == "nonparalyzable") return DeadTimeModel::kNonParalyzable;
  throw InvalidArgument("unknown dead-time model '" + s + "'");
}

UncertainValue detector_port_power(const UncertainValue& mpm_reading_w, const NonlinModel& model,
                                   RangeSetting range, const SwitchRatio& sw,
                                   const CpmCalibration& cpm, PowerOrientation orientation) {
  require_same_wavelength(model.wavelength_nm, sw.wavelength_nm, "nonlinearity model vs switch ratio");
  const UncertainValue& cf_cpm = cpm.at(model.wavelength_nm);
  const UncertainValue cf_nl = nonlin_correction(model, range, mpm_reading_w.value()).factor;

  if (orientation == PowerOrientation::kLegacyDivide) {
    return mpm_reading_w / sw.ratio / cf_cpm / cf_nl;
  }
  UncertainValue ratio = sw.ratio;
  if (sw.mpm_level_w > 0.0) {
    // The switch ratio was taken against an uncorrected monitor reading.
    ratio = ratio * nonlin_correction(model, sw.range, sw.mpm_level_w).factor;
  }
  return mpm_reading_w / cf_nl * ratio / cf_cpm;
}

PhotonFlux photon_rate(const UncertainValue& p_dp_w, const UncertainValue& alpha1,
                       const UncertainValue& alpha2, const UncertainValue& alpha3,
                       double wavelength_nm) {
  if (!(p_dp_w.value() > 0.0)) throw InvalidArgument("photon_rate: P_DP must be > 0");
  for (const auto* a : {&alpha1, &alpha2, &alpha3}) {
    if (!(a->value() > 0.0)) throw InvalidArgument("photon_rate: attenuations must be > 0");
  }
  if (!(wavelength_nm > 0.0)) throw InvalidArgument("photon_rate: wavelength must be > 0");
  PhotonFlux f;
  f.p_dp = p_dp_w;
  f.alpha = {alpha1, alpha2, alpha3};
  f.wavelength_nm = wavelength_nm;
  f.rate = p_dp_w * alpha1 * alpha2 * alpha3 / photon_energy_j(wavelength_nm);
  return f;
}

std::vector<RateAtBias> mean_count_rate(std::span<const CountRecord> records, CountPhase phase) {
  // Bias points in first-seen order.
  std::vector<std::pair<double, std::vector<const CountRecord*>>> points;
  for (const auto& rec : records) {
    if (rec.phase != phase) continue;
    if (rec.counts < 0) throw DataError("negative count in " + to_string(phase) + " record");
    if (!(rec.gate_s > 0.0)) throw DataError("non-positive gate time in " + to_string(phase) + " record");
    auto it = std::find_if(points.begin(), points.end(), [&](const auto& p) {
      return std::abs(p.first - rec.bias_voltage_v) <= kBiasTolerance;
    });
    if (it == points.end()) {
      points.push_back({rec.bias_voltage_v, {&rec}});
    } else {
      it->second.push_back(&rec);
    }
  }

  std::vector<RateAtBias> out;
  for (const auto& [bias, recs] : points) {
    const auto n = static_cast<double>(recs.size());
    std::vector<double> rates;
    double total_time = 0.0;
    double total_counts = 0.0;
    for (const auto* r : recs) {
      rates.push_back(static_cast<double>(r->counts) / r->gate_s);
      total_time += r->gate_s;
      total_counts += static_cast<double>(r->counts);
    }
    const double mean_rate = total_counts / total_time;
    const double poisson_var = mean_rate / total_time;
    double numerical_var = 0.0;
    if (recs.size() > 1) {
      const double m = std::accumulate(rates.begin(), rates.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : rates) ss += (x - m) * (x - m);
      numerical_var = ss / (n - 1.0) / n;
    }
    out.push_back({bias, UncertainValue::lift(mean_rate, std::sqrt(poisson_var + numerical_var)),
                   recs.size()});
  }
  return out;
}

std::vector<RateAtBias> net_count_rate(std::span<const RateAtBias> light, std::span<const RateAtBias> dark) {
  if (light.size() != dark.size()) {
    throw DataError("bias grids not aligned: " + std::to_string(light.size()) + " light points vs " +
                    std::to_string(dark.size()) + " dark points");
  }
  std::vector<RateAtBias> out;
  for (std::size_t i = 0; i < light.size(); ++i) {
    if (std::abs(light[i].bias_voltage_v - dark[i].bias_voltage_v) > kBiasTolerance) {
      std::ostringstream os;
      os << "bias grids not aligned at point " << i << ": " << light[i].bias_voltage_v << " V vs "
         << dark[i].bias_voltage_v << " V";
      throw DataError(os.str());
    }
    out.push_back({light[i].bias_voltage_v, light[i].rate - dark[i].rate,
                   std::min(light[i].gates, dark[i].gates)});
  }
  return out;
}

UncertainValue sde_estimate(const UncertainValue& net_rate, const PhotonFlux& flux) {
  if (!(flux.rate.value() > 0.0)) throw DomainError("SDE: photon rate must be > 0");
  return net_rate / flux.rate;
}

double pileup_max_sde(double input_rate, double dead_time_s, DeadTimeModel model) {
  if (!(input_rate >= 0.0)) throw InvalidArgument("pile-up: rate must be >= 0");
  if (!(dead_time_s >= 0.0)) throw InvalidArgument("pile-up: dead time must be >= 0");
  const double x = input_rate * dead_time_s;
  return model == DeadTimeModel::kParalyzable ? std::exp(-x) : 1.0 / (1.0 + x);
}

BudgetBreakdown SdeResult::budget(CountPhase phase, double bias_voltage_v) const {
  auto it = curves.find(phase);
  if (it == curves.end() || it->second.empty()) {
    throw DataError("no " + to_string(phase) + " curve in the SDE result");
  }
  const auto& pts = it->second;
  const auto best = std::min_element(pts.begin(), pts.end(), [&](const SdePoint& a, const SdePoint& b) {
    return std::abs(a.bias_voltage_v - bias_voltage_v) < std::abs(b.bias_voltage_v - bias_voltage_v);
  });
  BudgetBreakdown b;
  b.cf_cpm = cf_cpm.relative_sigma();
  b.cf_nl = cf_nl_att.relative_sigma();
  b.switch_ratio = switch_ratio.relative_sigma();
  for (std::size_t i = 0; i < 3; ++i) b.alpha[i] = flux.alpha[i].relative_sigma();
  b.mpm = mpm_reading.relative_sigma();
  b.p_dp = flux.p_dp.relative_sigma();
  b.counting = best->net_rate.relative_sigma();
  b.total = best->sde.relative_sigma();
  return b;
}

SdeResult sde_curve(const SdeSession& session, const CalibrationBundle& calib, const SdeOptions& options) {
  std::vector<std::string> missing;
  for (CountPhase ph : {CountPhase::kDark, CountPhase::kMaxPol, CountPhase::kMinPol}) {
    const bool present = std::any_of(session.counts.begin(), session.counts.end(),
                                     [ph](const CountRecord& r) { return r.phase == ph; });
    if (!present) missing.push_back(to_string(ph));
  }
  std::array<const AttenCalRecord*, 3> atten{};
  for (const auto& rec : session.atten) {
    if (rec.attenuator_id >= 1 && rec.attenuator_id <= 3) {
      atten[static_cast<std::size_t>(rec.attenuator_id - 1)] = &rec;
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (!atten[i]) missing.push_back("attenuator " + std::to_string(i + 1) + " calibration");
  }
  if (!missing.empty()) {
    std::string msg = "incomplete SDE session, missing:";
    for (const auto& m : missing) msg += " " + m + ";";
    msg.pop_back();
    throw DataError(msg);
  }
  require_same_wavelength(session.wavelength_nm, calib.nonlin.wavelength_nm,
                          "SDE session vs nonlinearity model");

  SdeResult out;
  out.wavelength_nm = session.wavelength_nm;
  out.options = options;

  std::array<UncertainValue, 3> alpha;
  std::vector<UncertainValue> zero_readings;
  for (std::size_t i = 0; i < 3; ++i) {
    out.attenuators[i] = calibrate_attenuator(*atten[i], calib.nonlin);
    if (out.attenuators[i].extrapolated) {
      out.warnings.push_back("attenuator " + std::to_string(i + 1) +
                             ": CF_NL evaluated outside the fitted span");
    }
    alpha[i] = out.attenuators[i].alpha;
    zero_readings.push_back(out.attenuators[i].zero_reading);
  }
  out.mpm_reading = mean(zero_readings);
  const RangeSetting zero_range = atten[0]->zero_range;
  out.cf_nl_att = nonlin_correction(calib.nonlin, atten[0]->att_range,
                                    out.attenuators[0].att_reading.value()).factor;

  UncertainValue p_dp = detector_port_power(out.mpm_reading, calib.nonlin, zero_range, calib.sw,
                                            calib.cpm, options.orientation);
  out.cf_cpm = calib.cpm.at(session.wavelength_nm);
  out.switch_ratio = calib.sw.ratio;
  if (!options.shared_mpm) {
    p_dp = independent_copy(p_dp);
    for (auto& a : alpha) a = independent_copy(a);
  }
  out.flux = photon_rate(p_dp, alpha[0], alpha[1], alpha[2], session.wavelength_nm);
  out.pileup_bound = pileup_max_sde(out.flux.rate.value(), options.dead_time_s, options.pileup_model);

  const auto dark = mean_count_rate(session.counts, CountPhase::kDark);
  for (CountPhase ph : {CountPhase::kMaxPol, CountPhase::kMinPol}) {
    const auto light = mean_count_rate(session.counts, ph);
    const auto net = net_count_rate(light, dark);
    std::vector<SdePoint> pts;
    for (std::size_t i = 0; i < net.size(); ++i) {
      SdePoint p;
      p.bias_voltage_v = net[i].bias_voltage_v;
      p.bias_current_a = bias_current_a(p.bias_voltage_v);
      p.net_rate = net[i].rate;
      p.light_rate = light[i].rate;
      p.dark_rate = dark[i].rate;
      p.sde = sde_estimate(net[i].rate, out.flux);
      pts.push_back(std::move(p));
    }
    out.curves.emplace(ph, std::move(pts));
  }
  return out;
}

BudgetBreakdown compose_error_budget(const BudgetInputs& in) {
  if (in.gates < 1 || !(in.gate_s > 0.0)) throw InvalidArgument("budget: need >= 1 gate of positive length");
  const double total_time = in.gates * in.gate_s;
  const double k2 = 1.0 + in.numerical_to_poisson * in.numerical_to_poisson;

  const auto cf_cpm = UncertainValue::lift(1.0, in.cf_cpm_rel);
  const auto cf_nl = UncertainValue::lift(1.0, in.cf_nl_rel);
  const auto r_sw = UncertainValue::lift(1.0, in.switch_ratio_rel);
  const auto mpm = UncertainValue::lift(1.0, in.mpm_rel);
  const std::array<UncertainValue, 3> alpha{UncertainValue::lift(1.0, in.alpha_rel),
                                            UncertainValue::lift(1.0, in.alpha_rel),
                                            UncertainValue::lift(1.0, in.alpha_rel)};
  const auto light = UncertainValue::lift(in.light_rate_cps, std::sqrt(k2 * in.light_rate_cps / total_time));
  const auto dark = UncertainValue::lift(in.dark_rate_cps, std::sqrt(k2 * in.dark_rate_cps / total_time));

  const UncertainValue p_dp = mpm / cf_nl * r_sw / cf_cpm;
  const UncertainValue net = light - dark;
  const UncertainValue exposure = p_dp * alpha[0] * alpha[1] * alpha[2];
  const UncertainValue sde = net / exposure;

  BudgetBreakdown b;
  b.cf_cpm = cf_cpm.relative_sigma();
  b.cf_nl = cf_nl.relative_sigma();
  b.switch_ratio = r_sw.relative_sigma();
  for (std::size_t i = 0; i < 3; ++i) b.alpha[i] = alpha[i].relative_sigma();
  b.mpm = mpm.relative_sigma();
  b.p_dp = p_dp.relative_sigma();
  b.counting = net.relative_sigma();
  b.total = sde.relative_sigma();
  return b;
}

double attenuator_relative_sigma(double mpm_ref_rel, double mpm_att_rel, double nl_ref_rel, double nl_att_rel) {
  const auto zero = UncertainValue::lift(1.0, mpm_ref_rel);
  const auto att = UncertainValue::lift(1.0, mpm_att_rel);
  const auto cf_zero = UncertainValue::lift(1.0, nl_ref_rel);
  const auto cf_att = UncertainValue::lift(1.0, nl_att_rel);
  return ((att / cf_att) / (zero / cf_zero)).relative_sigma();
}

}  // namespace sdem
