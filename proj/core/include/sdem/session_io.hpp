#pragma once

// On-disk session files. Every file is CSV with a header row, comma
// delimiters and '#'-prefixed comment lines; numbers are written with 17
// significant digits. A session directory holds a `session.json` manifest
// naming each file by role together with its SHA-256 digest.
//
//   nonlin.csv           kind,att1_dB,att2_dB,range_dBm,wavelength_nm,reading_W
//   switch_cal.csv       kind,meter,range_dBm,wavelength_nm,reading_W
//   atten_cal.csv        kind,attenuator,phase,att1_dB,att2_dB,att3_dB,range_dBm,wavelength_nm,reading_W
//   sde_atten.csv        same as atten_cal.csv
//   dark.csv, maxpol.csv, minpol.csv
//                        phase,bias_V,rep,counts   (comment "# gate_s=<s>")
//   polscan.csv          qwp_deg,hwp_deg,counts_1..counts_N,cpm_W,mpm_W[,dark_counts]
//   stability.csv        timestamp_s,power_W
//   cpm_certificate.csv  wavelength_nm,cf,rel_sigma
//
// `kind` is "offset" for zeroing reads taken with the light blocked and
// "read" otherwise; offsets are averaged per range and subtracted on load.
// Count files written by older acquisition scripts, with two columns
// (bias, counts) and phase markers "# Dark Counts", "# Maxpol light
// counts", "# Minpol light counts", are also accepted.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdem/instrument_cal.hpp"
#include "sdem/nonlin_cal.hpp"
#include "sdem/pol_stability.hpp"
#include "sdem/sde_analysis.hpp"

namespace sdem {

/// %.17g
std::string format_double(double x);

std::string sha256_hex(std::string_view data);
/// Throws DataError when the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);

// --- row types, one per CSV line ------------------------------------------------

enum class ReadKind { kOffset, kRead };

struct NonlinRow {
  ReadKind kind = ReadKind::kRead;
  double att1_db = 0.0;
  double att2_db = 0.0;
  int range_dbm = -10;
  double wavelength_nm = 0.0;
  double reading_w = 0.0;
};

struct SwitchRow {
  ReadKind kind = ReadKind::kRead;
  bool cpm = false;  // meter column: "cpm" or "mpm"
  int range_dbm = -10;
  double wavelength_nm = 0.0;
  double reading_w = 0.0;
};

struct AttenRow {
  ReadKind kind = ReadKind::kRead;
  int attenuator = 1;
  bool attenuated = false;  // phase column: "reference" or "attenuated"
  std::array<double, 3> att_db{0.0, 0.0, 0.0};
  int range_dbm = -10;
  double wavelength_nm = 0.0;
  double reading_w = 0.0;
};

struct CertificateRow {
  double wavelength_nm = 0.0;
  double cf = 1.0;
  double rel_sigma = 0.0;
};

struct StabilitySample {
  double timestamp_s = 0.0;
  double power_w = 0.0;
};

// --- writers ------------------------------------------------------------------------

void write_nonlin_csv(const std::filesystem::path& p, const std::vector<NonlinRow>& rows,
                      const std::vector<std::string>& comments = {});
void write_switch_csv(const std::filesystem::path& p, const std::vector<SwitchRow>& rows);
void write_atten_csv(const std::filesystem::path& p, const std::vector<AttenRow>& rows);
void write_count_csv(const std::filesystem::path& p, const std::vector<CountRecord>& rows);
void write_polscan_csv(const std::filesystem::path& p, const std::vector<PolGridRecord>& rows);
void write_stability_csv(const std::filesystem::path& p, const std::vector<StabilitySample>& rows);
void write_certificate_csv(const std::filesystem::path& p, const std::vector<CertificateRow>& rows);

// --- readers; schema violations throw ParseError naming file and line ------------

std::vector<NonlinRow> read_nonlin_csv(const std::filesystem::path& p);
std::vector<SwitchRow> read_switch_csv(const std::filesystem::path& p);
std::vector<AttenRow> read_atten_csv(const std::filesystem::path& p);
std::vector<CountRecord> read_count_csv(const std::filesystem::path& p);
std::vector<PolGridRecord> read_polscan_csv(const std::filesystem::path& p);
std::vector<StabilitySample> read_stability_csv(const std::filesystem::path& p);
std::vector<CertificateRow> read_certificate_csv(const std::filesystem::path& p);

// --- rows to analysis records --------------------------------------------------------

/// Mean offset per range from the "offset" rows (0 for ranges without any).
std::map<int, double> zero_offsets(const std::vector<NonlinRow>& rows);

/// Offset-corrected nonlinearity records.
std::vector<NonlinRecord> nonlin_records(const std::vector<NonlinRow>& rows);

/// Offset-corrected switch calibration. Throws DataError when either meter
/// has no readings or the rows mix wavelengths or ranges.
SwitchCalRecord switch_record(const std::vector<SwitchRow>& rows);

/// One record per attenuator, offset-corrected, ordered by id.
std::vector<AttenCalRecord> atten_records(const std::vector<AttenRow>& rows);

CpmCalibration cpm_calibration(const std::vector<CertificateRow>& rows);

StabilitySeries stability_series(const std::vector<StabilitySample>& rows);

// --- manifest ----------------------------------------------------------------------------

inline constexpr const char* kManifestName = "session.json";

struct ManifestEntry {
  std::string path;    // relative to the session directory
  std::string sha256;
};

struct SessionManifest {
  std::string session_id;
  double wavelength_nm = 0.0;
  std::map<std::string, ManifestEntry> files;  // by role
  std::optional<GridSpec> polscan_grid;
  std::vector<std::string> warnings;
  nlohmann::json extra = nlohmann::json::object();

  bool has(const std::string& role) const { return files.contains(role); }
};

/// Roles understood by the analysis commands.
const std::vector<std::string>& manifest_roles();

/// Computes digests of the listed files and writes session.json.
void write_manifest(const std::filesystem::path& dir, SessionManifest manifest);

/// Reads session.json and verifies every digest. Throws DataError when the
/// manifest is missing or malformed, a file is absent or a digest differs.
SessionManifest read_manifest(const std::filesystem::path& dir);

/// Absolute path of a role's file. Throws DataError naming the role when the
/// manifest lacks it.
std::filesystem::path role_path(const std::filesystem::path& dir, const SessionManifest& m,
                                const std::string& role);

/// SDE session (dark/maxpol/minpol counts and the embedded attenuator
/// calibration) from a verified manifest.
SdeSession load_sde_session(const std::filesystem::path& dir, const SessionManifest& m);

}  // namespace sdem
