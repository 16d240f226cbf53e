#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdem/errors.hpp"
#include "sdem/instrument_cal.hpp"
#include "sdem/json_io.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/pol_stability.hpp"
#include "sdem/sde_analysis.hpp"
#include "sdem/session_io.hpp"
#include "sdem/sim_harness.hpp"
#include "sdem/sim_scenario.hpp"

namespace sdemetro {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdem;

namespace {

struct Args {
  std::string scenario = "default";
  std::optional<std::uint64_t> seed;
  std::string session;
  std::string calib;
  std::optional<double> wavelength_nm;
  std::optional<int> range_dbm;
  std::optional<double> att_db;
  std::vector<double> tau;
  std::string model = "paralyzable";
  std::string out;
  std::string in;
  double dark_cps = 0.0;
  bool legacy = false;
  bool independent = false;
  bool json_stdout = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path session_dir(const Args& a) {
  if (!a.session.empty()) {
    fs::path p(a.session);
    const char* root = std::getenv("SDE_METROLOGY_DATA_DIR");
    if (p.is_relative() && root && *root && !fs::exists(p)) p = fs::path(root) / p;
    return p;
  }
  const char* root = std::getenv("SDE_METROLOGY_DATA_DIR");
  if (root && *root) return root;
  throw UsageError("--session is required (or set SDE_METROLOGY_DATA_DIR)");
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string(), 1, e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void emit(const Args& a, std::ostream& out, const std::string& text) {
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
}

CalibrationFile load_calibration(const std::string& path, bool must_exist) {
  if (path.empty()) throw UsageError("--calib is required");
  if (!fs::exists(path)) {
    if (must_exist) throw DataError("calibration file not found: " + path);
    return {};
  }
  const json j = read_json_file(path);
  try {
    return calibration_from_json(j);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void store_calibration(const Args& a, const CalibrationFile& c) {
  write_text(a.out.empty() ? fs::path(a.calib) : fs::path(a.out), dump_json(to_json(c)) + "\n");
}

void check_wavelength(const Args& a, double session_nm) {
  if (a.wavelength_nm) require_same_wavelength(*a.wavelength_nm, session_nm, "--wavelength-nm vs session");
}

SimScenario resolve_scenario(const Args& a) {
  SimScenario s;
  if (fs::exists(a.scenario)) {
    s = scenario_from_json(read_json_file(a.scenario));
  } else {
    const auto names = scenario_preset_names();
    if (std::find(names.begin(), names.end(), a.scenario) == names.end()) {
      throw UsageError("--scenario: no such file or preset: " + a.scenario);
    }
    s = scenario_preset(a.scenario);
  }
  if (a.seed) s.seed = *a.seed;
  if (a.wavelength_nm) s.wavelength_nm = *a.wavelength_nm;
  return s;
}

// --- subcommands ------------------------------------------------------------------------------

int cmd_simulate(const Args& a, std::ostream& out) {
  if (a.out.empty()) throw UsageError("simulate needs --out <directory>");
  const SimScenario s = resolve_scenario(a);
  const SessionBundle b = simulate_session(s);
  write_bundle(b, a.out);
  out << "wrote session " << b.session_id << " to " << a.out << " (" << format_double(b.duration_s)
      << " s simulated)\n";
  return kOk;
}

int cmd_cal_nonlin(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  const SessionManifest m = read_manifest(dir);
  check_wavelength(a, m.wavelength_nm);
  const fs::path file = role_path(dir, m, "nonlin");
  const auto records = nonlin_records(read_nonlin_csv(file));
  NonlinModel model = fit_nonlinearity(records);
  model = range_discontinuity(std::move(model), records);
  model.source_digest = m.files.at("nonlin").sha256;

  CalibrationFile c = load_calibration(a.calib, false);
  c.nonlin = model;
  c.session_id = m.session_id;
  store_calibration(a, c);
  out << "tau = " << to_string(model.tau) << ", reduced chi2 = " << format_double(model.reduced_chi2()) << '\n';
  for (const auto& [r, fit] : model.ranges) {
    out << "  range " << r << " dBm: order " << fit.order << ", RF = " << to_string(model.rf.at(r)) << '\n';
  }
  return kOk;
}

int cmd_cal_switch(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  const SessionManifest m = read_manifest(dir);
  check_wavelength(a, m.wavelength_nm);
  const SwitchRatio sw = switching_ratio(switch_record(read_switch_csv(role_path(dir, m, "switch_cal"))));
  const CpmCalibration cpm = cpm_calibration(read_certificate_csv(role_path(dir, m, "cpm_certificate")));
  cpm.at(sw.wavelength_nm);

  CalibrationFile c = load_calibration(a.calib, false);
  c.sw = sw;
  for (const auto& [wl, cf] : cpm.table()) c.cpm.set(wl, cf);
  store_calibration(a, c);
  out << "R_SW = " << to_string(sw.ratio) << " at " << format_double(sw.mpm_level_w) << " W\n";
  return kOk;
}

int cmd_cal_atten(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  const SessionManifest m = read_manifest(dir);
  check_wavelength(a, m.wavelength_nm);
  CalibrationFile c = load_calibration(a.calib, true);
  if (!c.nonlin) throw DataError("calibration bundle lacks a nonlinearity model (run cal-nonlin)");
  const auto records = atten_records(read_atten_csv(role_path(dir, m, "atten_cal")));
  c.attenuators.clear();
  for (const auto& rec : records) {
    if (a.att_db && std::abs(rec.nominal_setting_db - *a.att_db) > 1e-9) {
      throw DataError("attenuator " + std::to_string(rec.attenuator_id) + " was calibrated at " +
                      format_double(rec.nominal_setting_db) + " dB, not --att-db " + format_double(*a.att_db));
    }
    if (a.range_dbm && rec.att_range.dbm() != *a.range_dbm) {
      throw DataError("attenuator " + std::to_string(rec.attenuator_id) + " was read on range " +
                      rec.att_range.to_string() + ", not --range-dbm " + std::to_string(*a.range_dbm));
    }
    const AttenuatorCalibration cal = calibrate_attenuator(rec, *c.nonlin);
    out << "attenuator " << cal.attenuator_id << " @ " << format_double(cal.nominal_setting_db)
        << " dB: alpha = " << to_string(cal.alpha) << (cal.extrapolated ? " (CF_NL extrapolated)" : "") << '\n';
    c.attenuators.push_back(cal);
  }
  store_calibration(a, c);
  return kOk;
}

SdeOptions sde_options(const Args& a) {
  SdeOptions o;
  o.pileup_model = dead_time_model_from_string(a.model);
  o.orientation = a.legacy ? PowerOrientation::kLegacyDivide : PowerOrientation::kFromSwitchRatio;
  o.shared_mpm = !a.independent;
  return o;
}

SdeResult analyze_sde(const Args& a, const fs::path& dir, const SessionManifest& m, const CalibrationFile& c) {
  SdeSession session = load_sde_session(dir, m);
  if (a.att_db && std::abs(session.att_db - *a.att_db) > 1e-9) {
    throw DataError("session attenuators were set to " + format_double(session.att_db) + " dB, not --att-db " +
                    format_double(*a.att_db));
  }
  if (a.range_dbm && session.att_range.dbm() != *a.range_dbm) {
    throw DataError("session attenuator calibration used range " + session.att_range.to_string() +
                    ", not --range-dbm " + std::to_string(*a.range_dbm));
  }
  return sde_curve(session, c.bundle(), sde_options(a));
}

int cmd_sde(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  const SessionManifest m = read_manifest(dir);
  check_wavelength(a, m.wavelength_nm);
  const SdeResult r = analyze_sde(a, dir, m, load_calibration(a.calib, true));
  const bool csv = !a.out.empty() && fs::path(a.out).extension() == ".csv";
  emit(a, out, csv ? sde_csv(r) : dump_json(to_json(r)) + "\n");
  return kOk;
}

struct PolscanOutput {
  PolarizationResult result;
  std::vector<CorrectedPoint> grid;
  GridSpec spec;
};

PolscanOutput analyze_polscan(const Args& a, const fs::path& dir, const SessionManifest& m) {
  PolscanOutput o;
  const auto grid = read_polscan_csv(role_path(dir, m, "polscan"));
  o.spec = m.polscan_grid.value_or(GridSpec{});
  o.grid = transmission_correct(grid, UncertainValue(a.dark_cps), o.spec);
  o.result = polarization_sensitivity(o.grid);
  return o;
}

int cmd_polscan(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  const SessionManifest m = read_manifest(dir);
  const PolscanOutput o = analyze_polscan(a, dir, m);
  emit(a, out, dump_json(to_json(o.result, o.grid, o.spec)) + "\n");
  return kOk;
}

std::vector<double> default_taus(const StabilitySeries& s) {
  const double span = static_cast<double>(s.readings_w.size()) / s.sample_rate_hz;
  std::vector<double> taus;
  for (double decade = 1.0; decade <= span; decade *= 10.0) {
    for (double f : {1.0, 2.0, 5.0}) {
      const double t = f * decade;
      if (t >= 2.0 / s.sample_rate_hz && t <= span / 3.0) taus.push_back(t);
    }
  }
  return taus;
}

int cmd_allan(const Args& a, std::ostream& out) {
  fs::path file;
  if (!a.in.empty()) {
    file = a.in;
  } else {
    const fs::path dir = session_dir(a);
    file = role_path(dir, read_manifest(dir), "stability");
  }
  const StabilitySeries s = stability_series(read_stability_csv(file));
  const std::vector<double> taus = a.tau.empty() ? default_taus(s) : a.tau;
  const auto adev = allan_deviation(s, taus);
  std::ostringstream os;
  os << "tau_s,adev\n";
  for (const auto& [t, d] : adev) os << format_double(t) << ',' << format_double(d) << '\n';
  emit(a, out, os.str());
  return kOk;
}

std::string pct(double rel) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f%%", rel * 100.0);
  return buf;
}

int cmd_report(const Args& a, std::ostream& out) {
  const fs::path dir = session_dir(a);
  if (!fs::is_directory(dir)) throw DataError("session directory not found: " + dir.string());
  const SessionManifest m = read_manifest(dir);
  json rep;
  rep["session_id"] = m.session_id;
  rep["wavelength_nm"] = m.wavelength_nm;
  rep["warnings"] = m.warnings;
  std::ostringstream txt;
  txt << "session " << m.session_id << " at " << format_double(m.wavelength_nm) << " nm\n";
  for (const auto& w : m.warnings) txt << "  warning: " << w << '\n';

  bool any = false;
  if (m.has("maxpol") && m.has("minpol") && m.has("sde_atten")) {
    const SdeResult r = analyze_sde(a, dir, m, load_calibration(a.calib, true));
    rep["sde"] = to_json(r);
    txt << "\nSDE (" << to_string(r.options.pileup_model) << " pile-up bound " << pct(r.pileup_bound) << ")\n";
    txt << "  photon rate " << to_string(r.flux.rate) << " /s\n";
    txt << "  bias_uA      maxpol                 minpol\n";
    const auto& mx = r.curves.at(CountPhase::kMaxPol);
    const auto& mn = r.curves.at(CountPhase::kMinPol);
    for (std::size_t i = 0; i < mx.size() && i < mn.size(); ++i) {
      char line[160];
      std::snprintf(line, sizeof line, "  %7.3f   %.5f +- %.5f   %.5f +- %.5f\n", mx[i].bias_current_a * 1e6,
                    mx[i].sde.value(), mx[i].sde.sigma(), mn[i].sde.value(), mn[i].sde.sigma());
      txt << line;
    }
    const double bias = mx.empty() ? 0.0 : mx.back().bias_voltage_v;
    const BudgetBreakdown b = r.budget(CountPhase::kMaxPol, bias);
    rep["error_budget"] = to_json(b);
    rep["error_budget"]["bias_v"] = bias;
    txt << "\nerror budget at " << format_double(bias_current_a(bias) * 1e6) << " uA (relative)\n"
        << "  CF_CPM        " << pct(b.cf_cpm) << '\n'
        << "  CF_NL         " << pct(b.cf_nl) << '\n'
        << "  R_SW          " << pct(b.switch_ratio) << '\n'
        << "  alpha 1/2/3   " << pct(b.alpha[0]) << " / " << pct(b.alpha[1]) << " / " << pct(b.alpha[2]) << '\n'
        << "  MPM           " << pct(b.mpm) << '\n'
        << "  P_DP          " << pct(b.p_dp) << '\n'
        << "  counting      " << pct(b.counting) << '\n'
        << "  total         " << pct(b.total) << '\n';
    any = true;
  }
  if (m.has("polscan")) {
    const PolscanOutput o = analyze_polscan(a, dir, m);
    rep["polarization"] = to_json(o.result, o.grid, o.spec);
    txt << "\npolarization sensitivity " << to_string(o.result.ps) << " over " << o.grid.size() << " points\n";
    any = true;
  }
  if (m.has("stability")) {
    const StabilitySeries s = stability_series(read_stability_csv(role_path(dir, m, "stability")));
    const std::vector<double> taus = a.tau.empty() ? default_taus(s) : a.tau;
    const auto adev = allan_deviation(s, taus);
    json arr = json::array();
    txt << "\nAllan deviation\n";
    for (const auto& [t, d] : adev) {
      arr.push_back({{"tau_s", t}, {"adev", d}});
      char line[64];
      std::snprintf(line, sizeof line, "  %8.3g s   %.4g\n", t, d);
      txt << line;
    }
    rep["allan"] = arr;
    any = true;
  }
  if (!any) throw DataError("session " + dir.string() + " holds nothing to report (no SDE, polscan or stability files)");

  if (a.json_stdout) {
    out << dump_json(rep) << '\n';
  } else {
    out << txt.str();
  }
  if (!a.out.empty()) write_text(a.out, dump_json(rep) + "\n");
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Superconducting detector efficiency metrology toolkit", "sdemetro"};
  app.require_subcommand(1, 1);
  Args a;

  auto session_opt = [&](CLI::App* c) { c->add_option("--session", a.session, "Session directory"); };
  auto calib_opt = [&](CLI::App* c) { c->add_option("--calib", a.calib, "Calibration bundle JSON"); };
  auto out_opt = [&](CLI::App* c, const char* what) { c->add_option("--out", a.out, what); };
  auto wl_opt = [&](CLI::App* c) { c->add_option("--wavelength-nm", a.wavelength_nm, "Expected wavelength"); };
  auto att_opts = [&](CLI::App* c) {
    c->add_option("--att-db", a.att_db, "Expected attenuator setting (dB)");
    c->add_option("--range-dbm", a.range_dbm, "Expected MPM range of the attenuated phase");
  };
  auto sde_opts = [&](CLI::App* c) {
    c->add_option("--model", a.model, "Pile-up model")->check(CLI::IsMember({"paralyzable", "nonparalyzable"}));
    c->add_flag("--legacy-orientation", a.legacy, "Divide by the switch ratio (older form)");
    c->add_flag("--independent", a.independent, "Treat calibrated quantities as independent");
  };

  auto* sim = app.add_subcommand("simulate", "Run the virtual laboratory and write a session directory");
  sim->add_option("--scenario", a.scenario, "Scenario JSON file or preset name");
  sim->add_option("--seed", a.seed, "Seed");
  wl_opt(sim);
  out_opt(sim, "Output session directory");

  auto* nl = app.add_subcommand("cal-nonlin", "Fit the power-meter nonlinearity model");
  session_opt(nl);
  calib_opt(nl);
  wl_opt(nl);
  out_opt(nl, "Write the bundle here instead of --calib");

  auto* sw = app.add_subcommand("cal-switch", "Switch ratio and CPM factors");
  session_opt(sw);
  calib_opt(sw);
  wl_opt(sw);
  out_opt(sw, "Write the bundle here instead of --calib");

  auto* at = app.add_subcommand("cal-atten", "Calibrate the attenuators");
  session_opt(at);
  calib_opt(at);
  wl_opt(at);
  att_opts(at);
  out_opt(at, "Write the bundle here instead of --calib");

  auto* sde = app.add_subcommand("sde", "System detection efficiency versus bias");
  session_opt(sde);
  calib_opt(sde);
  wl_opt(sde);
  att_opts(sde);
  sde_opts(sde);
  out_opt(sde, "Output file (.json or .csv); stdout when omitted");

  auto* pol = app.add_subcommand("polscan", "Polarization sensitivity from a waveplate sweep");
  session_opt(pol);
  pol->add_option("--dark-cps", a.dark_cps, "Dark rate for points without their own dark gate");
  out_opt(pol, "Output JSON file; stdout when omitted");

  auto* al = app.add_subcommand("allan", "Overlapping Allan deviation of a power series");
  al->add_option("--in", a.in, "Stability CSV (timestamp_s,power_W)");
  session_opt(al);
  al->add_option("--tau", a.tau, "Averaging time(s) in seconds");
  out_opt(al, "Output CSV; stdout when omitted");

  auto* rep = app.add_subcommand("report", "Summary of a session: SDE, error budget, PS, ADEV");
  session_opt(rep);
  calib_opt(rep);
  att_opts(rep);
  sde_opts(rep);
  rep->add_option("--tau", a.tau, "Averaging times for the ADEV table");
  rep->add_option("--dark-cps", a.dark_cps, "Dark rate for polscan points without their own dark gate");
  rep->add_flag("--json", a.json_stdout, "Print the JSON summary instead of text");
  out_opt(rep, "Also write the JSON summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "sdemetro: " << e.what() << "\n" << "run 'sdemetro --help' for usage\n";
    return kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(a, out);
    if (nl->parsed()) return cmd_cal_nonlin(a, out);
    if (sw->parsed()) return cmd_cal_switch(a, out);
    if (at->parsed()) return cmd_cal_atten(a, out);
    if (sde->parsed()) return cmd_sde(a, out);
    if (pol->parsed()) return cmd_polscan(a, out);
    if (al->parsed()) return cmd_allan(a, out);
    if (rep->parsed()) return cmd_report(a, out);
  } catch (const UsageError& e) {
    err << "sdemetro: " << e.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "sdemetro: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "sdemetro: data error: " << e.what() << '\n';
    return kData;
  } catch (const FitFailure& e) {
    err << "sdemetro: numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DomainError& e) {
    err << "sdemetro: numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const nlohmann::json::exception& e) {
    err << "sdemetro: data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "sdemetro: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace sdemetro
