#include "sdem/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "sdem/errors.hpp"
#include "sdem/session_io.hpp"

namespace sdem {

using nlohmann::json;

namespace {

void emit(std::ostringstream& os, const json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(k).dump() << ": ";
        emit(os, v, indent, depth + 1);
      }
      os << '\n' << close_pad << '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      if (flat) {
        os << '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          emit(os, j[i], indent, depth + 1);
        }
        os << ']';
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        emit(os, j[i], indent, depth + 1);
      }
      os << '\n' << close_pad << ']';
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      if (!std::isfinite(x)) {
        os << "null";
      } else {
        os << format_double(x);
      }
      return;
    }
    default:
      os << j.dump();
  }
}

UncertainValue uv_from(const json& j) {
  return UncertainValue::lift(j.at("value").get<double>(), j.at("sigma").get<double>());
}

json range_fit_json(const RangeFit& f) {
  json beta = json::array();
  for (std::size_t k = 0; k < f.beta.size(); ++k) {
    beta.push_back({{"k", static_cast<int>(k + 2)}, {"value", f.beta[k].value()}, {"sigma", f.beta[k].sigma()}});
  }
  return {{"range_dbm", f.range.dbm()},
          {"full_scale_w", f.full_scale_w},
          {"order", f.order},
          {"beta_normalized", beta},
          {"span_min_w", f.span_min_w},
          {"span_max_w", f.span_max_w},
          {"settings", f.settings},
          {"order_reduced_chi2", f.order_reduced_chi2}};
}

}  // namespace

std::string dump_json(const json& j, int indent) {
  std::ostringstream os;
  emit(os, j, indent, 0);
  return os.str();
}

json uv_json(const UncertainValue& x) { return {{"value", x.value()}, {"sigma", x.sigma()}}; }

// --- nonlinearity model -------------------------------------------------------------------

json to_json(const NonlinModel& m) {
  json j;
  j["wavelength_nm"] = m.wavelength_nm;
  j["tau"] = uv_json(m.tau);
  j["normalization"] = "u = reading / full_scale; P(V) = V + full_scale * sum_k beta_k u^k";
  json ranges = json::array();
  for (auto it = m.ranges.rbegin(); it != m.ranges.rend(); ++it) ranges.push_back(range_fit_json(it->second));
  j["ranges"] = ranges;
  json rf = json::array();
  for (auto it = m.rf.rbegin(); it != m.rf.rend(); ++it) {
    rf.push_back({{"range_dbm", it->first}, {"value", it->second.value()}, {"sigma", it->second.sigma()}});
  }
  j["rf"] = rf;
  j["chi2"] = m.chi2;
  j["dof"] = m.dof;
  j["reduced_chi2"] = m.reduced_chi2();
  j["iterations"] = m.iterations;
  j["source_digest"] = m.source_digest;

  const auto params = m.parameters();
  std::vector<UncertainValue> values;
  json labels = json::array();
  json vals = json::array();
  for (const auto& [label, v] : params) {
    labels.push_back(label);
    vals.push_back(v.value());
    values.push_back(v);
  }
  const Eigen::MatrixXd cov = covariance_matrix(values);
  json cj = json::array();
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < cov.cols(); ++c) row.push_back(cov(r, c));
    cj.push_back(row);
  }
  j["parameters"] = {{"labels", labels}, {"values", vals}, {"covariance", cj}};
  return j;
}

NonlinModel nonlin_model_from_json(const json& j) {
  NonlinModel m;
  try {
    m.wavelength_nm = j.at("wavelength_nm").get<double>();
    for (const auto& r : j.at("ranges")) {
      RangeFit f;
      f.range = RangeSetting::from_dbm(r.at("range_dbm").get<int>());
      f.full_scale_w = r.at("full_scale_w").get<double>();
      f.order = r.at("order").get<int>();
      f.span_min_w = r.at("span_min_w").get<double>();
      f.span_max_w = r.at("span_max_w").get<double>();
      f.settings = r.at("settings").get<std::size_t>();
      f.order_reduced_chi2 = r.at("order_reduced_chi2").get<std::vector<double>>();
      f.beta.resize(static_cast<std::size_t>(std::max(0, f.order - 1)));
      m.ranges[f.range.dbm()] = f;
    }
    m.chi2 = j.at("chi2").get<double>();
    m.dof = j.at("dof").get<int>();
    m.iterations = j.at("iterations").get<int>();
    m.source_digest = j.at("source_digest").get<std::string>();

    const auto& p = j.at("parameters");
    const auto labels = p.at("labels").get<std::vector<std::string>>();
    const auto values = p.at("values").get<std::vector<double>>();
    const auto& cj = p.at("covariance");
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (static_cast<Eigen::Index>(values.size()) != n || static_cast<Eigen::Index>(cj.size()) != n) {
      throw DataError("nonlinearity model: parameter table sizes disagree");
    }
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = cj[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != n) throw DataError("nonlinearity model: covariance is not square");
      for (Eigen::Index c = 0; c < n; ++c) cov(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    const auto uv = correlated(values, cov);

    static const std::regex beta_re(R"(beta\[(-?\d+)\]\[(\d+)\])");
    static const std::regex rf_re(R"(rf\[(-?\d+)\])");
    m.rf[kTopRangeDbm] = UncertainValue(1.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::smatch mt;
      if (labels[i] == "tau") {
        m.tau = uv[i];
      } else if (std::regex_match(labels[i], mt, beta_re)) {
        const int r = std::stoi(mt[1]);
        const auto k = static_cast<std::size_t>(std::stoi(mt[2]));
        auto it = m.ranges.find(r);
        if (it == m.ranges.end() || k < 2 || k - 2 >= it->second.beta.size()) {
          throw DataError("nonlinearity model: parameter '" + labels[i] + "' does not match the range table");
        }
        it->second.beta[k - 2] = uv[i];
      } else if (std::regex_match(labels[i], mt, rf_re)) {
        m.rf[std::stoi(mt[1])] = uv[i];
      } else {
        throw DataError("nonlinearity model: unknown parameter '" + labels[i] + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("nonlinearity model: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("nonlinearity model: ") + e.what());
  }
  return m;
}

// --- calibration bundle ---------------------------------------------------------------------

CalibrationBundle CalibrationFile::bundle() const {
  if (!nonlin) throw DataError("calibration bundle lacks a nonlinearity model (run cal-nonlin)");
  if (!sw) throw DataError("calibration bundle lacks a switch ratio (run cal-switch)");
  if (cpm.table().empty()) throw DataError("calibration bundle lacks CPM factors (run cal-switch)");
  return {*nonlin, *sw, cpm};
}

json to_json(const CalibrationFile& c) {
  json j;
  j["session_id"] = c.session_id;
  j["nonlin"] = c.nonlin ? to_json(*c.nonlin) : json(nullptr);
  if (c.sw) {
    j["switch"] = {{"wavelength_nm", c.sw->wavelength_nm},
                   {"ratio", uv_json(c.sw->ratio)},
                   {"mpm_level_w", c.sw->mpm_level_w},
                   {"range_dbm", c.sw->range.dbm()}};
  } else {
    j["switch"] = nullptr;
  }
  json cpm = json::array();
  for (const auto& [wl, cf] : c.cpm.table()) cpm.push_back({{"wavelength_nm", wl}, {"cf", uv_json(cf)}});
  j["cpm"] = cpm;
  json atts = json::array();
  for (const auto& a : c.attenuators) {
    atts.push_back({{"attenuator", a.attenuator_id},
                    {"nominal_db", a.nominal_setting_db},
                    {"wavelength_nm", a.wavelength_nm},
                    {"alpha", uv_json(a.alpha)},
                    {"zero_reading_w", uv_json(a.zero_reading)},
                    {"att_reading_w", uv_json(a.att_reading)},
                    {"extrapolated", a.extrapolated}});
  }
  j["attenuators"] = atts;
  j["nonlin_digest"] = c.nonlin ? c.nonlin->source_digest : "";
  return j;
}

CalibrationFile calibration_from_json(const json& j) {
  CalibrationFile c;
  try {
    if (j.contains("session_id")) c.session_id = j["session_id"].get<std::string>();
    if (j.contains("nonlin") && !j["nonlin"].is_null()) c.nonlin = nonlin_model_from_json(j["nonlin"]);
    if (j.contains("switch") && !j["switch"].is_null()) {
      const auto& s = j["switch"];
      SwitchRatio r;
      r.wavelength_nm = s.at("wavelength_nm").get<double>();
      r.ratio = uv_from(s.at("ratio"));
      r.mpm_level_w = s.at("mpm_level_w").get<double>();
      r.range = RangeSetting::from_dbm(s.at("range_dbm").get<int>());
      c.sw = r;
    }
    if (j.contains("cpm")) {
      for (const auto& e : j["cpm"]) c.cpm.set(e.at("wavelength_nm").get<double>(), uv_from(e.at("cf")));
    }
    if (j.contains("attenuators")) {
      for (const auto& e : j["attenuators"]) {
        AttenuatorCalibration a;
        a.attenuator_id = e.at("attenuator").get<int>();
        a.nominal_setting_db = e.at("nominal_db").get<double>();
        a.wavelength_nm = e.at("wavelength_nm").get<double>();
        a.alpha = uv_from(e.at("alpha"));
        a.zero_reading = uv_from(e.at("zero_reading_w"));
        a.att_reading = uv_from(e.at("att_reading_w"));
        a.extrapolated = e.at("extrapolated").get<bool>();
        c.attenuators.push_back(a);
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("calibration bundle: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("calibration bundle: ") + e.what());
  }
  return c;
}

// --- results --------------------------------------------------------------------------------

json to_json(const BudgetBreakdown& b) {
  return {{"cf_cpm", b.cf_cpm},     {"cf_nl", b.cf_nl}, {"switch_ratio", b.switch_ratio},
          {"alpha", b.alpha},       {"mpm", b.mpm},     {"p_dp", b.p_dp},
          {"counting", b.counting}, {"total", b.total}};
}

json to_json(const SdeResult& r) {
  json j;
  j["wavelength_nm"] = r.wavelength_nm;
  j["orientation"] = r.options.orientation == PowerOrientation::kFromSwitchRatio ? "from_switch_ratio" : "legacy_divide";
  j["p_dp_w"] = uv_json(r.flux.p_dp);
  json alpha = json::array();
  for (const auto& a : r.flux.alpha) alpha.push_back(uv_json(a));
  j["alpha"] = alpha;
  j["photon_rate_per_s"] = uv_json(r.flux.rate);
  j["mpm_reading_w"] = uv_json(r.mpm_reading);
  j["cf_cpm"] = uv_json(r.cf_cpm);
  j["switch_ratio"] = uv_json(r.switch_ratio);
  j["cf_nl_att"] = uv_json(r.cf_nl_att);
  j["pileup"] = {{"model", to_string(r.options.pileup_model)},
                 {"dead_time_s", r.options.dead_time_s},
                 {"max_sde", r.pileup_bound}};
  json curves = json::object();
  for (const auto& [phase, pts] : r.curves) {
    json arr = json::array();
    for (const auto& p : pts) {
      arr.push_back({{"bias_v", p.bias_voltage_v},
                     {"bias_ua", p.bias_current_a * 1e6},
                     {"sde", p.sde.value()},
                     {"sigma", p.sde.sigma()},
                     {"net_rate", uv_json(p.net_rate)},
                     {"light_rate", uv_json(p.light_rate)},
                     {"dark_rate", uv_json(p.dark_rate)}});
    }
    curves[to_string(phase)] = arr;
  }
  j["curves"] = curves;
  j["warnings"] = r.warnings;
  return j;
}

json to_json(const PolarizationResult& r, const std::vector<CorrectedPoint>& grid, const GridSpec& spec) {
  json j;
  j["ps"] = uv_json(r.ps);
  j["max"] = {{"qwp_deg", grid[r.argmax].qwp_deg}, {"hwp_deg", grid[r.argmax].hwp_deg}, {"rate", uv_json(grid[r.argmax].rate)}};
  j["min"] = {{"qwp_deg", grid[r.argmin].qwp_deg}, {"hwp_deg", grid[r.argmin].hwp_deg}, {"rate", uv_json(grid[r.argmin].rate)}};
  j["grid"] = {{"qwp_start_deg", spec.qwp_start_deg}, {"qwp_span_deg", spec.qwp_span_deg},
               {"hwp_start_deg", spec.hwp_start_deg}, {"hwp_span_deg", spec.hwp_span_deg},
               {"steps", spec.steps}};
  json pts = json::array();
  for (const auto& p : grid) {
    pts.push_back({p.qwp_deg, p.hwp_deg, p.transmission, p.raw_rate.value(), p.rate.value(), p.rate.sigma()});
  }
  j["points_columns"] = {"qwp_deg", "hwp_deg", "transmission", "raw_rate", "rate", "sigma"};
  j["points"] = pts;
  return j;
}

std::string sde_csv(const SdeResult& r) {
  std::ostringstream os;
  os << "phase,bias_uA,sde,sigma\n";
  for (const auto& [phase, pts] : r.curves) {
    for (const auto& p : pts) {
      os << to_string(phase) << ',' << format_double(p.bias_current_a * 1e6) << ',' << format_double(p.sde.value())
         << ',' << format_double(p.sde.sigma()) << '\n';
    }
  }
  return os.str();
}

}  // namespace sdem
