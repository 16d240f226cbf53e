#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "sdem/json_io.hpp"
#include "sdem/session_io.hpp"
#include "sdem/sim_scenario.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result sdemetro_run(std::vector<std::string> args) {
  args.insert(args.begin(), "sdemetro");
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  std::ostringstream out, err;
  const int code = sdemetro::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::path(SDEM_TEST_TMP) / "cli" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// A small scenario keeps the simulated session short.
fs::path small_scenario(const fs::path& dir) {
  auto s = sdem::scenario_preset("sde-oracle");
  s.polscan.grid.steps = 5;
  s.stability.duration_s = 600.0;
  const fs::path p = dir / "s.json";
  std::ofstream(p) << sdem::dump_json(sdem::to_json(s));
  return p;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(sdemetro_run({"frobnicate"}).code == 2);
  CHECK(sdemetro_run({}).code == 2);
  CHECK(sdemetro_run({"allan", "--bogus"}).code == 2);
  CHECK(sdemetro_run({"sde", "--model", "sideways"}).code == 2);
  CHECK(sdemetro_run({"simulate"}).code == 2);
  CHECK(sdemetro_run({"simulate", "--scenario", "nope", "--out", scratch("nope").string()}).code == 2);
  CHECK(sdemetro_run({"--help"}).code == 0);
}

TEST_CASE("report on an empty directory is a data error") {
  auto dir = scratch("empty");
  auto r = sdemetro_run({"report", "--session", dir.string()});
  CHECK(r.code == 3);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate, calibrate, analyze, report") {
  auto dir = scratch("pipeline");
  auto scenario = small_scenario(dir);
  const auto session = (dir / "session").string();
  const auto cal = (dir / "cal.json").string();

  auto sim = sdemetro_run({"simulate", "--scenario", scenario.string(), "--seed", "7", "--out", session});
  REQUIRE(sim.code == 0);
  CHECK(fs::exists(fs::path(session) / "session.json"));

  REQUIRE(sdemetro_run({"cal-nonlin", "--session", session, "--calib", cal}).code == 0);
  REQUIRE(sdemetro_run({"cal-switch", "--session", session, "--calib", cal}).code == 0);
  REQUIRE(sdemetro_run({"cal-atten", "--session", session, "--calib", cal}).code == 0);
  auto calib = nlohmann::json::parse(read_text(cal));
  CHECK(calib.contains("nonlin"));

  const auto sde_json = (dir / "sde.json").string();
  auto sde = sdemetro_run({"sde", "--session", session, "--calib", cal, "--out", sde_json});
  REQUIRE(sde.code == 0);
  auto j = nlohmann::json::parse(read_text(sde_json));
  CHECK(j.contains("curves"));

  auto again = sdemetro_run({"sde", "--session", session, "--calib", cal, "--out", (dir / "sde2.json").string()});
  REQUIRE(again.code == 0);
  CHECK(read_text(sde_json) == read_text(dir / "sde2.json"));

  auto csv = sdemetro_run({"sde", "--session", session, "--calib", cal, "--out", (dir / "sde.csv").string()});
  REQUIRE(csv.code == 0);
  CHECK(read_text(dir / "sde.csv").rfind("phase,bias_uA,sde,sigma", 0) == 0);

  auto pol = sdemetro_run({"polscan", "--session", session});
  CHECK(pol.code == 0);

  auto rep1 = sdemetro_run({"report", "--session", session, "--calib", cal, "--json"});
  auto rep2 = sdemetro_run({"report", "--session", session, "--calib", cal, "--json"});
  REQUIRE(rep1.code == 0);
  CHECK(rep1.out == rep2.out);
  auto rep = nlohmann::json::parse(rep1.out);
  CHECK(rep.contains("sde"));
  CHECK(rep.contains("allan"));
  CHECK(rep.contains("polarization"));

  auto text = sdemetro_run({"report", "--session", session, "--calib", cal});
  CHECK(text.code == 0);
  CHECK(text.out.find("Allan deviation") != std::string::npos);
}

TEST_CASE("allan with one tau prints one row") {
  auto dir = scratch("allan");
  auto scenario = small_scenario(dir);
  REQUIRE(sdemetro_run({"simulate", "--scenario", scenario.string(), "--out", (dir / "s").string()}).code == 0);
  auto r = sdemetro_run({"allan", "--in", (dir / "s" / "stability.csv").string(), "--tau", "10"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string header, row, extra;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "tau_s,adev");
  CHECK(row.rfind("10,", 0) == 0);
  CHECK_FALSE(std::getline(lines, extra));

  auto bad = sdemetro_run({"allan", "--in", (dir / "s" / "stability.csv").string(), "--tau", "0.01"});
  CHECK(bad.code == 2);
}

TEST_CASE("schema violations exit 3 naming file and line") {
  auto dir = scratch("schema");
  auto scenario = small_scenario(dir);
  const auto session = dir / "s";
  REQUIRE(sdemetro_run({"simulate", "--scenario", scenario.string(), "--out", session.string()}).code == 0);
  auto manifest = sdem::read_manifest(session);

  auto text = read_text(session / "nonlin.csv");
  std::istringstream in(text);
  std::ostringstream fixed;
  std::string line;
  int n = 0, broken = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!broken && line.rfind("read,", 0) == 0) {
      line = "read,0,0,-30,1550,not-a-number";
      broken = n;
    }
    fixed << line << '\n';
  }
  std::ofstream(session / "nonlin.csv", std::ios::binary) << fixed.str();
  sdem::write_manifest(session, manifest);

  auto r = sdemetro_run({"cal-nonlin", "--session", session.string(), "--calib", (dir / "cal.json").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("nonlin.csv:" + std::to_string(broken)) != std::string::npos);

  std::ofstream(session / "dark.csv", std::ios::app) << "dark,0.1,1,5\n";
  auto tampered = sdemetro_run({"report", "--session", session.string()});
  CHECK(tampered.code == 3);
}
