#include "sdem/pol_stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sdem/errors.hpp"

namespace sdem {

namespace {

constexpr double kAngleTolDeg = 1e-6;

int grid_index(double angle, double start, double span, int steps) {
  const double f = (angle - start) / span * steps;
  const double i = std::round(f);
  if (std::abs(f - i) * span / steps > kAngleTolDeg || i < 0 || i >= steps) return -1;
  return static_cast<int>(i);
}

}  // namespace

void validate_grid(std::span<const PolGridRecord> grid, const GridSpec& spec) {
  if (spec.steps < 1) throw InvalidArgument("grid needs at least one step per axis");
  const auto n = static_cast<std::size_t>(spec.steps);
  std::vector<char> seen(n * n, 0);
  for (const auto& g : grid) {
    const int i = grid_index(g.qwp_deg, spec.qwp_start_deg, spec.qwp_span_deg, spec.steps);
    const int j = grid_index(g.hwp_deg, spec.hwp_start_deg, spec.hwp_span_deg, spec.steps);
    if (i < 0 || j < 0) {
      std::ostringstream os;
      os << "grid point (qwp " << g.qwp_deg << " deg, hwp " << g.hwp_deg << " deg) is off the configured grid";
      throw DataError(os.str());
    }
    if (!(g.cpm_w > 0.0) || !(g.mpm_w > 0.0)) {
      std::ostringstream os;
      os << "non-positive power reading at (qwp " << g.qwp_deg << " deg, hwp " << g.hwp_deg << " deg)";
      throw DataError(os.str());
    }
    if (g.counts.empty() || !(g.gate_s > 0.0)) {
      std::ostringstream os;
      os << "no count gates at (qwp " << g.qwp_deg << " deg, hwp " << g.hwp_deg << " deg)";
      throw DataError(os.str());
    }
    seen[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = 1;
  }
  std::vector<std::string> missing;
  for (int i = 0; i < spec.steps; ++i) {
    for (int j = 0; j < spec.steps; ++j) {
      if (!seen[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)]) {
        std::ostringstream os;
        os << "(" << spec.qwp_angle(i) << ", " << spec.hwp_angle(j) << ")";
        missing.push_back(os.str());
      }
    }
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "incomplete grid: " << missing.size() << " of " << n * n << " points missing, first at (qwp, hwp) = "
       << missing.front();
    throw DataError(os.str());
  }
}

std::vector<CorrectedPoint> transmission_correct(std::span<const PolGridRecord> grid,
                                                 const UncertainValue& session_dark,
                                                 const GridSpec& spec) {
  validate_grid(grid, spec);
  double t_max = 0.0;
  for (const auto& g : grid) t_max = std::max(t_max, g.cpm_w / g.mpm_w);

  std::vector<CorrectedPoint> out;
  out.reserve(grid.size());
  for (const auto& g : grid) {
    const auto n = static_cast<double>(g.counts.size());
    const double total_time = n * g.gate_s;
    double sum = 0.0;
    for (auto c : g.counts) sum += static_cast<double>(c);
    const double mean_rate = sum / total_time;
    double var = mean_rate / total_time;
    if (g.counts.size() > 1) {
      double ss = 0.0;
      for (auto c : g.counts) {
        const double d = static_cast<double>(c) / g.gate_s - mean_rate;
        ss += d * d;
      }
      var += ss / (n - 1.0) / n;
    }
    UncertainValue dark = session_dark;
    if (g.dark_counts) {
      const double dr = static_cast<double>(*g.dark_counts) / g.gate_s;
      dark = UncertainValue::lift(dr, std::sqrt(std::max(dr, 0.0) / g.gate_s));
    }
    CorrectedPoint p;
    p.qwp_deg = g.qwp_deg;
    p.hwp_deg = g.hwp_deg;
    p.transmission = g.cpm_w / g.mpm_w / t_max;
    p.raw_rate = UncertainValue::lift(mean_rate, std::sqrt(var)) - dark;
    p.rate = p.raw_rate / p.transmission;
    out.push_back(std::move(p));
  }
  return out;
}

PolarizationResult polarization_sensitivity(std::span<const CorrectedPoint> grid) {
  if (grid.empty()) throw DataError("empty polarization grid");
  std::size_t imax = 0;
  std::size_t imin = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i].rate.value() > grid[imax].rate.value()) imax = i;
    if (grid[i].rate.value() < grid[imin].rate.value()) imin = i;
  }
  if (!(grid[imin].rate.value() > 0.0)) {
    std::ostringstream os;
    os << "degenerate grid: minimum corrected rate " << grid[imin].rate.value() << " at (qwp "
       << grid[imin].qwp_deg << " deg, hwp " << grid[imin].hwp_deg << " deg)";
    throw DomainError(os.str());
  }
  PolarizationResult r;
  r.argmax = imax;
  r.argmin = imin;
  r.ps = imax == imin ? UncertainValue(1.0) : grid[imax].rate / grid[imin].rate;
  return r;
}

StabilitySeries make_stability_series(std::span<const double> timestamps_s, std::span<const double> readings_w) {
  if (timestamps_s.size() != readings_w.size()) throw DataError("timestamp and reading counts differ");
  if (readings_w.size() < 2) throw DataError("stability series needs at least 2 samples");
  const double dt = (timestamps_s.back() - timestamps_s.front()) / static_cast<double>(timestamps_s.size() - 1);
  if (!(dt > 0.0)) throw DataError("stability timestamps must increase");
  for (std::size_t i = 1; i < timestamps_s.size(); ++i) {
    const double step = timestamps_s[i] - timestamps_s[i - 1];
    if (std::abs(step - dt) > 0.01 * dt) {
      std::ostringstream os;
      os << "non-uniform sampling at sample " << i << ": step " << step << " s vs mean " << dt << " s";
      throw DataError(os.str());
    }
  }
  return {std::vector<double>(readings_w.begin(), readings_w.end()), 1.0 / dt};
}

std::vector<std::pair<double, double>> allan_deviation(const StabilitySeries& series,
                                                       std::span<const double> taus_s) {
  const std::size_t n = series.readings_w.size();
  if (n < 2) throw InvalidArgument("stability series needs at least 2 samples");
  if (!(series.sample_rate_hz > 0.0)) throw InvalidArgument("sample rate must be > 0");
  const double m0 = std::accumulate(series.readings_w.begin(), series.readings_w.end(), 0.0) / static_cast<double>(n);
  if (!(m0 != 0.0)) throw DomainError("stability series has zero mean");

  // Phase x_k = sum_{i<k} y_i (in units of one sample).
  std::vector<double> x(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) x[i + 1] = x[i] + (series.readings_w[i] / m0 - 1.0);

  const double span_s = static_cast<double>(n) / series.sample_rate_hz;
  std::vector<std::pair<double, double>> out;
  for (double tau : taus_s) {
    if (!(tau >= 2.0 / series.sample_rate_hz) || !(tau <= span_s / 3.0)) {
      std::ostringstream os;
      os << "invalid tau " << tau << " s: must lie in [" << 2.0 / series.sample_rate_hz << ", " << span_s / 3.0
         << "] s";
      throw InvalidArgument(os.str());
    }
    const auto m = static_cast<std::size_t>(std::llround(tau * series.sample_rate_hz));
    const std::size_t terms = n + 1 - 2 * m;
    double acc = 0.0;
    for (std::size_t k = 0; k < terms; ++k) {
      const double d = x[k + 2 * m] - 2.0 * x[k + m] + x[k];
      acc += d * d;
    }
    const double md = static_cast<double>(m);
    out.emplace_back(tau, std::sqrt(acc / (2.0 * md * md * static_cast<double>(terms))));
  }
  return out;
}

double log_log_slope(std::span<const std::pair<double, double>> adev) {
  if (adev.size() < 2) throw InvalidArgument("slope needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [t, a] : adev) {
    if (!(t > 0.0) || !(a > 0.0)) throw DomainError("log-log slope needs positive tau and deviation");
    const double lx = std::log(t), ly = std::log(a);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const auto n = static_cast<double>(adev.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace sdem
