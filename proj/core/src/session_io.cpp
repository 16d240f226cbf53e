#include "sdem/session_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "sdem/errors.hpp"
#include "sdem/json_io.hpp"

namespace sdem {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Line {
  std::size_t number = 0;
  std::vector<std::string> fields;
};

/// Comment lines and blank lines are kept apart from data lines.
struct CsvFile {
  std::string name;
  std::vector<std::pair<std::size_t, std::string>> comments;  // text after '#'
  std::vector<Line> lines;                                    // every non-comment line

  explicit CsvFile(const fs::path& p) : name(p.string()) {
    std::istringstream in(slurp(p));
    std::string raw;
    std::size_t n = 0;
    while (std::getline(in, raw)) {
      ++n;
      const std::string_view t = trim(raw);
      if (t.empty()) continue;
      if (t.front() == '#') {
        comments.emplace_back(n, std::string(trim(t.substr(1))));
        continue;
      }
      lines.push_back({n, split(t)});
    }
  }
};

/// Header-indexed view of a CsvFile.
class Table {
 public:
  Table(const fs::path& p, std::vector<std::string> required) : file_(p) {
    if (file_.lines.empty()) throw ParseError(file_.name, 1, "missing header row");
    const Line& h = file_.lines.front();
    for (std::size_t i = 0; i < h.fields.size(); ++i) index_[h.fields[i]] = i;
    for (const auto& c : required) {
      if (!index_.contains(c)) throw ParseError(file_.name, h.number, "missing column '" + c + "'");
    }
  }

  std::size_t rows() const { return file_.lines.size() - 1; }
  std::size_t line(std::size_t r) const { return file_.lines[r + 1].number; }
  bool has(const std::string& col) const { return index_.contains(col); }
  const CsvFile& file() const { return file_; }
  const std::vector<std::string>& header() const { return file_.lines.front().fields; }

  const std::string& str(std::size_t r, const std::string& col) const {
    const Line& l = file_.lines[r + 1];
    const std::size_t i = index_.at(col);
    if (l.fields.size() != header().size()) {
      throw ParseError(file_.name, l.number,
                       "expected " + std::to_string(header().size()) + " fields, found " + std::to_string(l.fields.size()));
    }
    return l.fields[i];
  }

  double num(std::size_t r, const std::string& col) const {
    const std::string& s = str(r, col);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError(file_.name, line(r), "column '" + col + "': '" + s + "' is not a number");
    }
    return v;
  }

  std::int64_t integer(std::size_t r, const std::string& col) const {
    const std::string& s = str(r, col);
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ParseError(file_.name, line(r), "column '" + col + "': '" + s + "' is not an integer");
    }
    return v;
  }

  int range(std::size_t r, const std::string& col) const {
    const auto v = integer(r, col);
    if (!RangeSetting::is_admitted(static_cast<int>(v))) {
      throw ParseError(file_.name, line(r), "column '" + col + "': " + std::to_string(v) + " is not a meter range");
    }
    return static_cast<int>(v);
  }

  ReadKind kind(std::size_t r) const {
    const std::string& s = str(r, "kind");
    if (s == "offset") return ReadKind::kOffset;
    if (s == "read") return ReadKind::kRead;
    throw ParseError(file_.name, line(r), "column 'kind': expected offset or read, found '" + s + "'");
  }

  ParseError error(std::size_t r, const std::string& what) const { return ParseError(file_.name, line(r), what); }

 private:
  CsvFile file_;
  std::map<std::string, std::size_t> index_;
};

const char* kind_name(ReadKind k) { return k == ReadKind::kOffset ? "offset" : "read"; }

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

std::optional<double> parse_gate(const CsvFile& f) {
  for (const auto& [n, c] : f.comments) {
    if (c.rfind("gate_s=", 0) == 0) {
      const std::string v = c.substr(7);
      double g = 0.0;
      const auto res = std::from_chars(v.data(), v.data() + v.size(), g);
      if (res.ec != std::errc() || !(g > 0.0)) throw ParseError(f.name, n, "bad gate_s comment");
      return g;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(slurp(path)); }

// --- writers -----------------------------------------------------------------------------

void write_nonlin_csv(const fs::path& p, const std::vector<NonlinRow>& rows, const std::vector<std::string>& comments) {
  auto out = open_out(p);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "kind,att1_dB,att2_dB,range_dBm,wavelength_nm,reading_W\n";
  for (const auto& r : rows) {
    out << kind_name(r.kind) << ',' << format_double(r.att1_db) << ',' << format_double(r.att2_db) << ','
        << r.range_dbm << ',' << format_double(r.wavelength_nm) << ',' << format_double(r.reading_w) << '\n';
  }
}

void write_switch_csv(const fs::path& p, const std::vector<SwitchRow>& rows) {
  auto out = open_out(p);
  out << "kind,meter,range_dBm,wavelength_nm,reading_W\n";
  for (const auto& r : rows) {
    out << kind_name(r.kind) << ',' << (r.cpm ? "cpm" : "mpm") << ',' << r.range_dbm << ','
        << format_double(r.wavelength_nm) << ',' << format_double(r.reading_w) << '\n';
  }
}

void write_atten_csv(const fs::path& p, const std::vector<AttenRow>& rows) {
  auto out = open_out(p);
  out << "kind,attenuator,phase,att1_dB,att2_dB,att3_dB,range_dBm,wavelength_nm,reading_W\n";
  for (const auto& r : rows) {
    out << kind_name(r.kind) << ',' << r.attenuator << ',' << (r.attenuated ? "attenuated" : "reference") << ','
        << format_double(r.att_db[0]) << ',' << format_double(r.att_db[1]) << ',' << format_double(r.att_db[2])
        << ',' << r.range_dbm << ',' << format_double(r.wavelength_nm) << ',' << format_double(r.reading_w) << '\n';
  }
}

void write_count_csv(const fs::path& p, const std::vector<CountRecord>& rows) {
  auto out = open_out(p);
  const double gate = rows.empty() ? 1.0 : rows.front().gate_s;
  for (const auto& r : rows) {
    if (r.gate_s != gate) throw InvalidArgument("count file rows must share one gate time");
  }
  out << "# gate_s=" << format_double(gate) << '\n';
  out << "phase,bias_V,rep,counts\n";
  for (const auto& r : rows) {
    out << to_string(r.phase) << ',' << format_double(r.bias_voltage_v) << ',' << r.repetition << ',' << r.counts
        << '\n';
  }
}

void write_polscan_csv(const fs::path& p, const std::vector<PolGridRecord>& rows) {
  auto out = open_out(p);
  const std::size_t n = rows.empty() ? 1 : rows.front().counts.size();
  const bool dark = !rows.empty() && rows.front().dark_counts.has_value();
  const double gate = rows.empty() ? 1.0 : rows.front().gate_s;
  for (const auto& r : rows) {
    if (r.counts.size() != n || r.dark_counts.has_value() != dark || r.gate_s != gate) {
      throw InvalidArgument("polscan rows must share gate count, gate time and dark column");
    }
  }
  out << "# gate_s=" << format_double(gate) << '\n';
  out << "qwp_deg,hwp_deg";
  for (std::size_t i = 1; i <= n; ++i) out << ",counts_" << i;
  out << ",cpm_W,mpm_W";
  if (dark) out << ",dark_counts";
  out << '\n';
  for (const auto& r : rows) {
    out << format_double(r.qwp_deg) << ',' << format_double(r.hwp_deg);
    for (auto c : r.counts) out << ',' << c;
    out << ',' << format_double(r.cpm_w) << ',' << format_double(r.mpm_w);
    if (dark) out << ',' << *r.dark_counts;
    out << '\n';
  }
}

void write_stability_csv(const fs::path& p, const std::vector<StabilitySample>& rows) {
  auto out = open_out(p);
  out << "timestamp_s,power_W\n";
  for (const auto& r : rows) out << format_double(r.timestamp_s) << ',' << format_double(r.power_w) << '\n';
}

void write_certificate_csv(const fs::path& p, const std::vector<CertificateRow>& rows) {
  auto out = open_out(p);
  out << "wavelength_nm,cf,rel_sigma\n";
  for (const auto& r : rows) {
    out << format_double(r.wavelength_nm) << ',' << format_double(r.cf) << ',' << format_double(r.rel_sigma) << '\n';
  }
}

// --- readers -------------------------------------------------------------------------------

std::vector<NonlinRow> read_nonlin_csv(const fs::path& p) {
  Table t(p, {"kind", "att1_dB", "att2_dB", "range_dBm", "wavelength_nm", "reading_W"});
  std::vector<NonlinRow> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    NonlinRow row;
    row.kind = t.kind(r);
    row.att1_db = t.num(r, "att1_dB");
    row.att2_db = t.num(r, "att2_dB");
    row.range_dbm = t.range(r, "range_dBm");
    row.wavelength_nm = t.num(r, "wavelength_nm");
    row.reading_w = t.num(r, "reading_W");
    if (row.kind == ReadKind::kRead && row.att2_db != kAtt2Off && row.att2_db != kAtt2On) {
      throw t.error(r, "att2_dB must be 0 or 3");
    }
    if (row.att1_db < 0.0) throw t.error(r, "att1_dB must be >= 0");
    out.push_back(row);
  }
  return out;
}

std::vector<SwitchRow> read_switch_csv(const fs::path& p) {
  Table t(p, {"kind", "meter", "range_dBm", "wavelength_nm", "reading_W"});
  std::vector<SwitchRow> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    SwitchRow row;
    row.kind = t.kind(r);
    const std::string& m = t.str(r, "meter");
    if (m != "cpm" && m != "mpm") throw t.error(r, "column 'meter': expected cpm or mpm, found '" + m + "'");
    row.cpm = m == "cpm";
    row.range_dbm = t.range(r, "range_dBm");
    row.wavelength_nm = t.num(r, "wavelength_nm");
    row.reading_w = t.num(r, "reading_W");
    out.push_back(row);
  }
  return out;
}

std::vector<AttenRow> read_atten_csv(const fs::path& p) {
  Table t(p, {"kind", "attenuator", "phase", "att1_dB", "att2_dB", "att3_dB", "range_dBm", "wavelength_nm",
              "reading_W"});
  std::vector<AttenRow> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    AttenRow row;
    row.kind = t.kind(r);
    const auto id = t.integer(r, "attenuator");
    if (id < 1 || id > 3) throw t.error(r, "column 'attenuator': expected 1, 2 or 3");
    row.attenuator = static_cast<int>(id);
    const std::string& ph = t.str(r, "phase");
    if (ph != "reference" && ph != "attenuated") {
      throw t.error(r, "column 'phase': expected reference or attenuated, found '" + ph + "'");
    }
    row.attenuated = ph == "attenuated";
    row.att_db = {t.num(r, "att1_dB"), t.num(r, "att2_dB"), t.num(r, "att3_dB")};
    row.range_dbm = t.range(r, "range_dBm");
    row.wavelength_nm = t.num(r, "wavelength_nm");
    row.reading_w = t.num(r, "reading_W");
    out.push_back(row);
  }
  return out;
}

std::vector<CountRecord> read_count_csv(const fs::path& p) {
  const CsvFile f(p);
  const double gate = parse_gate(f).value_or(1.0);
  if (f.lines.empty()) throw ParseError(f.name, 1, "no data");

  double probe = 0.0;
  const std::string& first = f.lines.front().fields.front();
  const bool legacy = std::from_chars(first.data(), first.data() + first.size(), probe).ec == std::errc();

  std::vector<CountRecord> out;
  if (!legacy) {
    Table t(p, {"phase", "bias_V", "rep", "counts"});
    for (std::size_t r = 0; r < t.rows(); ++r) {
      CountRecord c;
      try {
        c.phase = count_phase_from_string(t.str(r, "phase"));
      } catch (const InvalidArgument&) {
        throw t.error(r, "column 'phase': expected dark, maxpol or minpol, found '" + t.str(r, "phase") + "'");
      }
      c.bias_voltage_v = t.num(r, "bias_V");
      c.repetition = static_cast<int>(t.integer(r, "rep"));
      c.counts = t.integer(r, "counts");
      if (c.counts < 0) throw t.error(r, "negative counts");
      c.gate_s = gate;
      out.push_back(c);
    }
    return out;
  }

  // Two-column legacy layout; the phase follows the most recent marker.
  std::optional<CountPhase> phase;
  std::size_t ci = 0;
  std::map<std::pair<int, double>, int> reps;
  for (const auto& line : f.lines) {
    while (ci < f.comments.size() && f.comments[ci].first < line.number) {
      std::string c = f.comments[ci].second;
      std::transform(c.begin(), c.end(), c.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (c.find("dark counts") != std::string::npos) phase = CountPhase::kDark;
      if (c.find("maxpol light counts") != std::string::npos) phase = CountPhase::kMaxPol;
      if (c.find("minpol light counts") != std::string::npos) phase = CountPhase::kMinPol;
      ++ci;
    }
    if (!phase) throw ParseError(f.name, line.number, "count row before any phase marker");
    if (line.fields.size() != 2) throw ParseError(f.name, line.number, "expected 2 fields (bias, counts)");
    CountRecord c;
    c.phase = *phase;
    const auto& b = line.fields[0];
    const auto& n = line.fields[1];
    if (std::from_chars(b.data(), b.data() + b.size(), c.bias_voltage_v).ec != std::errc()) {
      throw ParseError(f.name, line.number, "bias '" + b + "' is not a number");
    }
    const auto res = std::from_chars(n.data(), n.data() + n.size(), c.counts);
    if (res.ec != std::errc() || res.ptr != n.data() + n.size() || c.counts < 0) {
      throw ParseError(f.name, line.number, "counts '" + n + "' is not a non-negative integer");
    }
    c.repetition = ++reps[{static_cast<int>(c.phase), c.bias_voltage_v}];
    c.gate_s = gate;
    out.push_back(c);
  }
  return out;
}

std::vector<PolGridRecord> read_polscan_csv(const fs::path& p) {
  Table t(p, {"qwp_deg", "hwp_deg", "cpm_W", "mpm_W"});
  const double gate = parse_gate(t.file()).value_or(1.0);
  std::vector<std::string> count_cols;
  for (const auto& h : t.header()) {
    if (h.rfind("counts_", 0) == 0) count_cols.push_back(h);
  }
  if (count_cols.empty()) throw ParseError(t.file().name, t.file().lines.front().number, "no counts_<i> columns");
  const bool dark = t.has("dark_counts");
  std::vector<PolGridRecord> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    PolGridRecord g;
    g.qwp_deg = t.num(r, "qwp_deg");
    g.hwp_deg = t.num(r, "hwp_deg");
    for (const auto& c : count_cols) {
      const auto v = t.integer(r, c);
      if (v < 0) throw t.error(r, "negative counts");
      g.counts.push_back(v);
    }
    g.gate_s = gate;
    g.cpm_w = t.num(r, "cpm_W");
    g.mpm_w = t.num(r, "mpm_W");
    if (!(g.cpm_w > 0.0) || !(g.mpm_w > 0.0)) throw t.error(r, "power readings must be > 0");
    if (dark) {
      g.dark_counts = t.integer(r, "dark_counts");
      if (*g.dark_counts < 0) throw t.error(r, "negative dark counts");
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<StabilitySample> read_stability_csv(const fs::path& p) {
  Table t(p, {"timestamp_s", "power_W"});
  std::vector<StabilitySample> out;
  for (std::size_t r = 0; r < t.rows(); ++r) out.push_back({t.num(r, "timestamp_s"), t.num(r, "power_W")});
  return out;
}

std::vector<CertificateRow> read_certificate_csv(const fs::path& p) {
  Table t(p, {"wavelength_nm", "cf", "rel_sigma"});
  std::vector<CertificateRow> out;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    CertificateRow c{t.num(r, "wavelength_nm"), t.num(r, "cf"), t.num(r, "rel_sigma")};
    if (!(c.cf > 0.0) || c.rel_sigma < 0.0) throw t.error(r, "cf must be > 0 and rel_sigma >= 0");
    out.push_back(c);
  }
  return out;
}

// --- rows to records ---------------------------------------------------------------------------

std::map<int, double> zero_offsets(const std::vector<NonlinRow>& rows) {
  std::map<int, std::vector<double>> by;
  for (const auto& r : rows) {
    if (r.kind == ReadKind::kOffset) by[r.range_dbm].push_back(r.reading_w);
  }
  std::map<int, double> out;
  for (const auto& [k, v] : by) out[k] = mean_of(v);
  return out;
}

std::vector<NonlinRecord> nonlin_records(const std::vector<NonlinRow>& rows) {
  const auto off = zero_offsets(rows);
  std::vector<NonlinRecord> out;
  for (const auto& r : rows) {
    if (r.kind != ReadKind::kRead) continue;
    const auto it = off.find(r.range_dbm);
    NonlinRecord rec;
    rec.att1_db = r.att1_db;
    rec.att2_db = r.att2_db;
    rec.range = RangeSetting::from_dbm(r.range_dbm);
    rec.reading_w = r.reading_w - (it == off.end() ? 0.0 : it->second);
    rec.wavelength_nm = r.wavelength_nm;
    out.push_back(rec);
  }
  return out;
}

SwitchCalRecord switch_record(const std::vector<SwitchRow>& rows) {
  std::map<std::pair<bool, int>, std::vector<double>> off;
  for (const auto& r : rows) {
    if (r.kind == ReadKind::kOffset) off[{r.cpm, r.range_dbm}].push_back(r.reading_w);
  }
  SwitchCalRecord rec;
  bool first = true;
  for (const auto& r : rows) {
    if (r.kind != ReadKind::kRead) continue;
    if (first) {
      rec.wavelength_nm = r.wavelength_nm;
      rec.range = RangeSetting::from_dbm(r.range_dbm);
      first = false;
    }
    require_same_wavelength(rec.wavelength_nm, r.wavelength_nm, "switch calibration rows");
    if (r.range_dbm != rec.range.dbm()) throw DataError("switch calibration rows mix meter ranges");
    const double o = mean_of(off[{r.cpm, r.range_dbm}]);
    (r.cpm ? rec.cpm_readings : rec.mpm_readings).push_back(r.reading_w - o);
  }
  if (rec.cpm_readings.empty() || rec.mpm_readings.empty()) {
    throw DataError("switch calibration needs readings from both meters");
  }
  return rec;
}

std::vector<AttenCalRecord> atten_records(const std::vector<AttenRow>& rows) {
  std::map<std::pair<int, bool>, std::vector<double>> off;
  for (const auto& r : rows) {
    if (r.kind == ReadKind::kOffset) off[{r.attenuator, r.attenuated}].push_back(r.reading_w);
  }
  std::map<int, AttenCalRecord> recs;
  std::map<std::pair<int, bool>, bool> seen;
  for (const auto& r : rows) {
    if (r.kind != ReadKind::kRead) continue;
    auto [it, fresh] = recs.try_emplace(r.attenuator);
    AttenCalRecord& rec = it->second;
    if (fresh) {
      rec.attenuator_id = r.attenuator;
      rec.wavelength_nm = r.wavelength_nm;
    }
    require_same_wavelength(rec.wavelength_nm, r.wavelength_nm, "attenuator calibration rows");
    const bool first_of_phase = !seen[{r.attenuator, r.attenuated}];
    seen[{r.attenuator, r.attenuated}] = true;
    const RangeSetting range = RangeSetting::from_dbm(r.range_dbm);
    auto& settings = r.attenuated ? rec.att_phase_settings : rec.zero_phase_settings;
    auto& rg = r.attenuated ? rec.att_range : rec.zero_range;
    if (first_of_phase) {
      settings = r.att_db;
      rg = range;
    } else if (settings != r.att_db || rg != range) {
      throw DataError("attenuator " + std::to_string(r.attenuator) + " calibration: settings change within a phase");
    }
    const double o = mean_of(off[{r.attenuator, r.attenuated}]);
    (r.attenuated ? rec.att_readings : rec.zero_readings).push_back(r.reading_w - o);
  }
  std::vector<AttenCalRecord> out;
  for (auto& [id, rec] : recs) {
    rec.nominal_setting_db = rec.att_phase_settings[static_cast<std::size_t>(id - 1)];
    validate(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

CpmCalibration cpm_calibration(const std::vector<CertificateRow>& rows) {
  CpmCalibration c;
  for (const auto& r : rows) c.set(r.wavelength_nm, UncertainValue::lift(r.cf, r.cf * r.rel_sigma));
  return c;
}

StabilitySeries stability_series(const std::vector<StabilitySample>& rows) {
  std::vector<double> t, p;
  for (const auto& r : rows) {
    t.push_back(r.timestamp_s);
    p.push_back(r.power_w);
  }
  return make_stability_series(t, p);
}

// --- manifest ----------------------------------------------------------------------------------

const std::vector<std::string>& manifest_roles() {
  static const std::vector<std::string> roles{"nonlin",   "switch_cal", "atten_cal", "dark",      "maxpol",
                                              "minpol",   "sde_atten",  "polscan",   "stability", "cpm_certificate"};
  return roles;
}

void write_manifest(const fs::path& dir, SessionManifest m) {
  nlohmann::json j;
  j["session_id"] = m.session_id;
  j["wavelength_nm"] = m.wavelength_nm;
  nlohmann::json files = nlohmann::json::object();
  for (auto& [role, e] : m.files) {
    e.sha256 = sha256_file(dir / e.path);
    files[role] = {{"path", e.path}, {"sha256", e.sha256}};
  }
  j["files"] = files;
  if (m.polscan_grid) {
    const auto& g = *m.polscan_grid;
    j["polscan_grid"] = {{"qwp_start_deg", g.qwp_start_deg}, {"qwp_span_deg", g.qwp_span_deg},
                         {"hwp_start_deg", g.hwp_start_deg}, {"hwp_span_deg", g.hwp_span_deg},
                         {"steps", g.steps}};
  }
  j["warnings"] = m.warnings;
  j["extra"] = m.extra;
  auto out = open_out(dir / kManifestName);
  out << dump_json(j) << '\n';
}

SessionManifest read_manifest(const fs::path& dir) {
  const fs::path p = dir / kManifestName;
  if (!fs::exists(p)) throw DataError("no " + std::string(kManifestName) + " in " + dir.string());
  SessionManifest m;
  try {
    const auto j = nlohmann::json::parse(slurp(p));
    m.session_id = j.at("session_id").get<std::string>();
    m.wavelength_nm = j.at("wavelength_nm").get<double>();
    for (const auto& [role, e] : j.at("files").items()) {
      m.files[role] = {e.at("path").get<std::string>(), e.at("sha256").get<std::string>()};
    }
    if (j.contains("polscan_grid")) {
      const auto& g = j["polscan_grid"];
      GridSpec s;
      s.qwp_start_deg = g.at("qwp_start_deg").get<double>();
      s.qwp_span_deg = g.at("qwp_span_deg").get<double>();
      s.hwp_start_deg = g.at("hwp_start_deg").get<double>();
      s.hwp_span_deg = g.at("hwp_span_deg").get<double>();
      s.steps = g.at("steps").get<int>();
      m.polscan_grid = s;
    }
    if (j.contains("warnings")) m.warnings = j["warnings"].get<std::vector<std::string>>();
    if (j.contains("extra")) m.extra = j["extra"];
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  for (const auto& [role, e] : m.files) {
    const fs::path f = dir / e.path;
    if (fs::path(e.path).is_absolute() || e.path.find("..") != std::string::npos) {
      throw DataError("manifest role '" + role + "' points outside the session directory");
    }
    if (!fs::exists(f)) throw DataError("manifest role '" + role + "': missing file " + f.string());
    const std::string d = sha256_file(f);
    if (d != e.sha256) throw DataError("digest mismatch for " + f.string() + " (role '" + role + "')");
  }
  return m;
}

fs::path role_path(const fs::path& dir, const SessionManifest& m, const std::string& role) {
  const auto it = m.files.find(role);
  if (it == m.files.end()) throw DataError("session " + m.session_id + " has no '" + role + "' file");
  return dir / it->second.path;
}

SdeSession load_sde_session(const fs::path& dir, const SessionManifest& m) {
  SdeSession s;
  s.wavelength_nm = m.wavelength_nm;
  std::vector<std::string> missing;
  for (const char* role : {"maxpol", "minpol", "sde_atten"}) {
    if (!m.has(role)) missing.push_back(role);
  }
  if (!missing.empty()) {
    std::string msg = "incomplete SDE session, missing:";
    for (const auto& r : missing) msg += " " + r;
    throw DataError(msg);
  }
  // Legacy acquisitions wrote the dark scan into both light files; darks
  // are taken from the dark file when there is one, else from maxpol.
  const std::pair<const char*, CountPhase> wanted[] = {
      {"maxpol", CountPhase::kMaxPol}, {"minpol", CountPhase::kMinPol}, {"dark", CountPhase::kDark}};
  for (const auto& [role, phase] : wanted) {
    if (!m.has(role)) continue;
    for (const auto& rec : read_count_csv(role_path(dir, m, role))) {
      const bool dark_from_light = rec.phase == CountPhase::kDark && phase == CountPhase::kMaxPol && !m.has("dark");
      if (rec.phase == phase || dark_from_light) s.counts.push_back(rec);
    }
  }
  s.atten = atten_records(read_atten_csv(role_path(dir, m, "sde_atten")));
  if (!s.atten.empty()) {
    s.att_db = s.atten.front().nominal_setting_db;
    s.att_range = s.atten.front().att_range;
  }
  return s;
}

}  // namespace sdem
