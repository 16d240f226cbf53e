#include "sdem/nonlin_cal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>

#include "sdem/errors.hpp"

namespace sdem {

namespace {

// numpy.arange semantics for a float step.
std::vector<double> arange(double start, double stop, double step) {
  const auto n = static_cast<long>(std::ceil((stop - start) / step));
  std::vector<double> out;
  for (long i = 0; i < n; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

// Attenuator settings are compared on a micro-dB lattice.
long long setting_key(double db) { return std::llround(db * 1e6); }

struct Stats {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
  }
  return s;
}

double poly_value(double u, std::span<const double> beta) {
  double p = u;
  double uk = u;
  for (double b : beta) {
    uk *= u;
    p += b * uk;
  }
  return p;
}

// --- joint least-squares problem -------------------------------------------

struct Problem {
  std::vector<NonlinGroup> groups;
  std::vector<int> ranges;                  // dBm, descending (-10 first)
  std::map<int, std::vector<std::size_t>> by_range;
  std::vector<double> u_off;                // normalised readings
  std::vector<double> u_on;
  std::vector<double> weight;               // residual scale in normalised units
};

struct Solution {
  double tau = 0.5;
  std::map<int, std::vector<double>> beta;  // per range, k = 2..order
  double chi2 = 0.0;
  int dof = 0;
  int iterations = 0;
  Eigen::MatrixXd jtj;                      // at the optimum
  bool converged = false;
};

struct Layout {
  std::map<int, int> order;
  std::map<int, Eigen::Index> offset;  // first beta index per range
  Eigen::Index size = 1;
};

Layout make_layout(const std::vector<int>& ranges, const std::map<int, int>& orders) {
  Layout l;
  l.order = orders;
  Eigen::Index next = 1;
  for (int r : ranges) {
    l.offset[r] = next;
    next += orders.at(r) - 1;
  }
  l.size = next;
  return l;
}

void residuals(const Problem& p, const Layout& l, const Eigen::VectorXd& theta, Eigen::VectorXd& res,
               Eigen::MatrixXd* jac) {
  const auto n = static_cast<Eigen::Index>(p.groups.size());
  res.resize(n);
  if (jac) jac->setZero(n, l.size);
  const double tau = theta(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto gi = static_cast<std::size_t>(i);
    const int r = p.groups[gi].range.dbm();
    const Eigen::Index off = l.offset.at(r);
    const int order = l.order.at(r);
    const double u = p.u_off[gi];
    const double ut = p.u_on[gi];
    const double w = p.weight[gi];
    double pu = u;
    double put = ut;
    double uk = u;
    double utk = ut;
    for (int k = 2; k <= order; ++k) {
      uk *= u;
      utk *= ut;
      const double b = theta(off + k - 2);
      pu += b * uk;
      put += b * utk;
      if (jac) (*jac)(i, off + k - 2) = (utk - tau * uk) / w;
    }
    res(i) = (put - tau * pu) / w;
    if (jac) (*jac)(i, 0) = -pu / w;
  }
}

Solution solve(const Problem& p, const std::map<int, int>& orders, double tau0,
               const std::map<int, std::vector<double>>* warm, int max_iterations) {
  const Layout l = make_layout(p.ranges, orders);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(l.size);
  theta(0) = tau0;
  if (warm) {
    for (int r : p.ranges) {
      auto it = warm->find(r);
      if (it == warm->end()) continue;
      for (int k = 2; k <= orders.at(r) && k - 2 < static_cast<int>(it->second.size()); ++k) {
        theta(l.offset.at(r) + k - 2) = it->second[static_cast<std::size_t>(k - 2)];
      }
    }
  }

  Solution sol;
  sol.dof = static_cast<int>(p.groups.size()) - static_cast<int>(l.size);

  Eigen::VectorXd res;
  Eigen::MatrixXd jac;
  residuals(p, l, theta, res, &jac);
  double chi2 = res.squaredNorm();
  double lambda = 1e-3;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * res;
    Eigen::MatrixXd a = jtj;
    for (Eigen::Index d = 0; d < a.rows(); ++d) {
      a(d, d) += lambda * std::max(jtj(d, d), 1e-30);
    }
    const Eigen::VectorXd step = a.ldlt().solve(-grad);
    if (!step.allFinite()) break;
    const Eigen::VectorXd trial = theta + step;
    Eigen::VectorXd res_trial;
    residuals(p, l, trial, res_trial, nullptr);
    const double chi2_trial = res_trial.squaredNorm();
    if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
      const double drop = chi2 - chi2_trial;
      theta = trial;
      chi2 = chi2_trial;
      residuals(p, l, theta, res, &jac);
      lambda = std::max(lambda * 0.1, 1e-12);
      const double rel_step = step.norm() / (theta.norm() + 1e-30);
      if (drop <= 1e-12 * (chi2 + 1e-300) || rel_step < 1e-13) {
        sol.converged = true;
        ++it;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) {
        // No downhill step left: the current point is the minimum to
        // working precision.
        sol.converged = true;
        ++it;
        break;
      }
    }
  }
  sol.iterations = it;
  sol.tau = theta(0);
  sol.chi2 = chi2;
  sol.jtj = jac.transpose() * jac;
  for (int r : p.ranges) {
    std::vector<double> b;
    for (int k = 2; k <= orders.at(r); ++k) b.push_back(theta(l.offset.at(r) + k - 2));
    sol.beta[r] = std::move(b);
  }
  return sol;
}

double reduced(const Solution& s) {
  return s.dof > 0 ? s.chi2 / s.dof : std::numeric_limits<double>::infinity();
}

bool better_order(const Solution& candidate, int candidate_order, const Solution& incumbent,
                  int incumbent_order, const NonlinFitOptions& opt) {
  if (candidate.dof <= 0) return false;
  if (!(reduced(candidate) < reduced(incumbent))) return false;
  if (opt.selection == OrderSelection::kMinReducedChiSquare) return true;
  if (candidate_order < incumbent_order) return true;
  const double extra = candidate_order - incumbent_order;
  const double f = ((incumbent.chi2 - candidate.chi2) / extra) / (candidate.chi2 / candidate.dof);
  const boost::math::fisher_f dist(extra, candidate.dof);
  const double critical = boost::math::quantile(boost::math::complement(dist, opt.significance));
  return f > critical;
}

Problem build_problem(std::span<const NonlinRecord> records) {
  Problem p;
  p.groups = group_nonlin_records(records);
  if (p.groups.empty()) throw DataError("nonlinearity fit: no usable (att1, range) groups");

  for (std::size_t i = 0; i < p.groups.size(); ++i) p.by_range[p.groups[i].range.dbm()].push_back(i);
  for (const auto& [r, idx] : p.by_range) p.ranges.push_back(r);
  std::sort(p.ranges.begin(), p.ranges.end(), std::greater<>());

  // Nominal tau for weighting: median of the raw on/off ratios.
  std::vector<double> ratios;
  for (const auto& g : p.groups) ratios.push_back(g.mean_on_w / g.mean_off_w);
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<long>(ratios.size() / 2), ratios.end());
  const double tau0 = ratios[ratios.size() / 2];

  std::vector<double> raw_w;
  for (const auto& g : p.groups) {
    const double fs = g.range.full_scale_w();
    p.u_off.push_back(g.mean_off_w / fs);
    p.u_on.push_back(g.mean_on_w / fs);
    raw_w.push_back(std::sqrt(g.se_on_w * g.se_on_w + tau0 * tau0 * g.se_off_w * g.se_off_w) / fs);
  }
  std::vector<double> positive;
  for (double w : raw_w) {
    if (w > 0.0) positive.push_back(w);
  }
  if (positive.empty()) {
    p.weight.assign(raw_w.size(), 1.0);
  } else {
    std::sort(positive.begin(), positive.end());
    const double floor = 1e-3 * positive[positive.size() / 2];
    for (double w : raw_w) p.weight.push_back(std::max(w, floor));
  }
  return p;
}

double initial_tau(const Problem& p) {
  std::vector<double> ratios;
  for (std::size_t i = 0; i < p.groups.size(); ++i) ratios.push_back(p.u_on[i] / p.u_off[i]);
  std::nth_element(ratios.begin(), ratios.begin() + static_cast<long>(ratios.size() / 2), ratios.end());
  return ratios[ratios.size() / 2];
}

}  // namespace

// --- schedule -----------------------------------------------------------------

std::vector<double> nonlin_sweep_levels() {
  std::vector<double> levels{20.0, 15.0};
  for (double x : arange(10.0, 0.9, -0.5)) levels.push_back(x);
  for (double x : arange(0.95, 0.5, -0.5)) levels.push_back(x);
  return levels;
}

std::vector<int> nonlin_base_settings() {
  std::vector<int> base;
  for (double x : nonlin_sweep_levels()) {
    base.push_back(static_cast<int>(std::nearbyint(10.0 - 10.0 * std::log10(x))));
  }
  const int lo = *std::min_element(base.begin(), base.end());
  for (int& b : base) b -= lo;
  return base;
}

std::vector<int> nonlin_att1_settings(RangeSetting r) {
  std::vector<int> out;
  for (int b : nonlin_base_settings()) out.push_back(b - (r.dbm() + 10) - 3);  // 3 is an offset
  return out;
}

NonlinSchedule plan_nonlin_sweep(std::span<const RangeSetting> ranges) {
  if (ranges.empty()) throw InvalidArgument("plan_nonlin_sweep: no ranges given");
  NonlinSchedule sched;
  for (RangeSetting r : ranges) {
    int clamped = 0;
    for (int a : nonlin_att1_settings(r)) {
      const bool clamp = a < 0;
      clamped += clamp ? 1 : 0;
      for (double step : {kAtt2Off, kAtt2On}) {
        sched.entries.push_back({clamp ? 0.0 : static_cast<double>(a), step, r,
                                 static_cast<double>(a), clamp});
      }
    }
    if (clamped > 0) {
      sched.warnings.push_back(std::to_string(clamped) + " att1 setting(s) below 0 dB at " +
                               r.to_string() + " clamped to 0 dB");
    }
  }
  return sched;
}

// --- records ------------------------------------------------------------------

void validate(const NonlinRecord& rec) {
  if (!(rec.reading_w > 0.0) || !std::isfinite(rec.reading_w)) {
    throw DataError("nonlinearity record at att1=" + std::to_string(rec.att1_db) + " dB, " +
                    rec.range.to_string() + ": reading must be > 0");
  }
  if (rec.att2_db != kAtt2Off && rec.att2_db != kAtt2On) {
    throw DataError("nonlinearity record: att2 must be 0 or 3 dB, got " + std::to_string(rec.att2_db));
  }
}

std::vector<NonlinGroup> group_nonlin_records(std::span<const NonlinRecord> records) {
  struct Acc {
    std::vector<double> off;
    std::vector<double> on;
    double att1 = 0.0;
  };
  std::map<std::pair<int, long long>, Acc> acc;
  std::optional<double> wavelength;
  for (const auto& rec : records) {
    validate(rec);
    if (wavelength && std::abs(*wavelength - rec.wavelength_nm) > 1e-6) {
      throw DataError("nonlinearity records mix wavelengths " + std::to_string(*wavelength) +
                      " and " + std::to_string(rec.wavelength_nm) + " nm");
    }
    wavelength = rec.wavelength_nm;
    auto& a = acc[{rec.range.dbm(), setting_key(rec.att1_db)}];
    a.att1 = rec.att1_db;
    (rec.att2_db == kAtt2Off ? a.off : a.on).push_back(rec.reading_w);
  }

  std::vector<NonlinGroup> groups;
  for (auto it = acc.rbegin(); it != acc.rend(); ++it) {
    const auto& [key, a] = *it;
    if (a.off.empty() || a.on.empty()) {
      throw DataError("nonlinearity data at " + std::to_string(key.first) + " dBm, att1=" +
                      std::to_string(a.att1) + " dB lacks the " +
                      (a.off.empty() ? std::string("0 dB") : std::string("3 dB")) + " att2 state");
    }
    const Stats off = stats_of(a.off);
    const Stats on = stats_of(a.on);
    groups.push_back({RangeSetting::from_dbm(key.first), a.att1, off.mean, on.mean, off.se, on.se,
                      off.n, on.n});
  }
  return groups;
}

// --- model --------------------------------------------------------------------

const RangeFit& NonlinModel::range_fit(RangeSetting r) const {
  auto it = ranges.find(r.dbm());
  if (it == ranges.end()) {
    throw DataError("nonlinearity model at " + std::to_string(wavelength_nm) + " nm has no fit for " +
                    r.to_string());
  }
  return it->second;
}

UncertainValue NonlinModel::linearized(RangeSetting r, const UncertainValue& reading_w) const {
  const RangeFit& fit = range_fit(r);
  const UncertainValue u = reading_w / fit.full_scale_w;
  UncertainValue p = u;
  UncertainValue uk = u;
  for (const auto& b : fit.beta) {
    uk = uk * u;
    p = p + b * uk;
  }
  return p * fit.full_scale_w;
}

double NonlinModel::linearized_value(RangeSetting r, double reading_w) const {
  const RangeFit& fit = range_fit(r);
  std::vector<double> beta;
  for (const auto& b : fit.beta) beta.push_back(b.value());
  return fit.full_scale_w * poly_value(reading_w / fit.full_scale_w, beta);
}

UncertainValue NonlinModel::rf_chain(RangeSetting r) const {
  UncertainValue prod(1.0);
  for (int d = r.dbm(); d <= -20; d += 10) {
    auto it = rf.find(d);
    if (it == rf.end()) {
      throw DataError("nonlinearity model has no range-discontinuity factor for " +
                      std::to_string(d) + " dBm");
    }
    prod = prod * it->second;
  }
  return prod;
}

bool NonlinModel::in_span(RangeSetting r, double reading_w) const {
  const RangeFit& fit = range_fit(r);
  return reading_w >= fit.span_min_w && reading_w <= fit.span_max_w;
}

std::vector<std::pair<std::string, UncertainValue>> NonlinModel::parameters() const {
  std::vector<std::pair<std::string, UncertainValue>> out;
  out.emplace_back("tau", tau);
  for (auto it = ranges.rbegin(); it != ranges.rend(); ++it) {
    for (std::size_t k = 0; k < it->second.beta.size(); ++k) {
      out.emplace_back("beta[" + std::to_string(it->first) + "][" + std::to_string(k + 2) + "]",
                       it->second.beta[k]);
    }
  }
  for (auto it = rf.rbegin(); it != rf.rend(); ++it) {
    if (it->first == kTopRangeDbm) continue;
    out.emplace_back("rf[" + std::to_string(it->first) + "]", it->second);
  }
  return out;
}

// --- fitting ------------------------------------------------------------------

NonlinModel fit_nonlinearity(std::span<const NonlinRecord> records, const NonlinFitOptions& options) {
  if (options.max_order < 1 || options.max_order > 5) {
    throw InvalidArgument("max_order must be within 1..5");
  }
  const Problem p = build_problem(records);

  std::map<int, int> cap;
  for (int r : p.ranges) {
    const auto settings = static_cast<int>(p.by_range.at(r).size());
    if (settings < 2) {
      throw DataError("insufficient data at " + std::to_string(r) + " dBm: " +
                      std::to_string(settings) + " att1 setting(s), need at least 2");
    }
    cap[r] = std::max(1, std::min(options.max_order, settings - 2));
    if (auto f = options.fixed_orders.find(r); f != options.fixed_orders.end()) {
      if (f->second < 1 || f->second + 1 > settings) {
        throw DataError("insufficient data at " + std::to_string(r) + " dBm for order " +
                        std::to_string(f->second));
      }
      cap[r] = f->second;
    }
  }

  std::map<int, int> orders;
  for (int r : p.ranges) {
    auto f = options.fixed_orders.find(r);
    orders[r] = f != options.fixed_orders.end() ? f->second : 1;
  }

  const double tau0 = initial_tau(p);
  Solution best = solve(p, orders, tau0, nullptr, options.max_iterations);
  std::map<int, std::vector<double>> order_chi2;

  for (int pass = 0; pass < options.selection_passes; ++pass) {
    bool changed = false;
    for (int r : p.ranges) {
      if (options.fixed_orders.contains(r)) continue;
      std::vector<Solution> sols;
      std::vector<double> red;
      for (int n = 1; n <= cap[r]; ++n) {
        auto trial_orders = orders;
        trial_orders[r] = n;
        sols.push_back(solve(p, trial_orders, best.tau, &best.beta, options.max_iterations));
        red.push_back(reduced(sols.back()));
      }
      int chosen = 1;
      for (int n = 2; n <= cap[r]; ++n) {
        if (better_order(sols[static_cast<std::size_t>(n - 1)], n,
                         sols[static_cast<std::size_t>(chosen - 1)], chosen, options)) {
          chosen = n;
        }
      }
      order_chi2[r] = red;
      if (chosen != orders[r]) {
        orders[r] = chosen;
        changed = true;
      }
      best = sols[static_cast<std::size_t>(chosen - 1)];
    }
    if (!changed) break;
  }

  best = solve(p, orders, best.tau, &best.beta, options.max_iterations);
  if (!best.converged) {
    std::ostringstream os;
    os << "nonlinearity fit did not converge after " << best.iterations
       << " iterations (chi2=" << best.chi2 << ", tau=" << best.tau << ")";
    throw FitFailure(os.str());
  }
  if (best.dof <= 0) {
    throw DataError("nonlinearity fit has no degrees of freedom left (" +
                    std::to_string(p.groups.size()) + " points)");
  }
  if (!(best.tau > 0.0 && best.tau < 1.0)) {
    throw FitFailure("nonlinearity fit produced tau=" + std::to_string(best.tau) +
                     " outside (0, 1)");
  }

  Eigen::MatrixXd cov;
  {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(best.jtj);
    if (cod.rank() < best.jtj.rows()) {
      throw FitFailure("nonlinearity fit is degenerate (rank " + std::to_string(cod.rank()) +
                       " of " + std::to_string(best.jtj.rows()) + ")");
    }
    cov = cod.pseudoInverse();
    cov = 0.5 * (cov + cov.transpose());
  }
  const double red = reduced(best);
  if (options.scale_covariance) cov *= red;

  std::vector<double> theta{best.tau};
  for (int r : p.ranges) {
    for (double b : best.beta.at(r)) theta.push_back(b);
  }
  const auto params = correlated(theta, cov);

  NonlinModel model;
  model.wavelength_nm = records.front().wavelength_nm;
  model.tau = params[0];
  model.chi2 = best.chi2;
  model.dof = best.dof;
  model.iterations = best.iterations;
  std::size_t next = 1;
  for (int r : p.ranges) {
    RangeFit fit;
    fit.range = RangeSetting::from_dbm(r);
    fit.full_scale_w = fit.range.full_scale_w();
    fit.order = orders.at(r);
    for (int k = 2; k <= fit.order; ++k) fit.beta.push_back(params[next++]);
    fit.settings = p.by_range.at(r).size();
    fit.span_min_w = std::numeric_limits<double>::infinity();
    fit.span_max_w = 0.0;
    for (std::size_t i : p.by_range.at(r)) {
      const auto& g = p.groups[i];
      fit.span_min_w = std::min({fit.span_min_w, g.mean_on_w, g.mean_off_w});
      fit.span_max_w = std::max({fit.span_max_w, g.mean_on_w, g.mean_off_w});
    }
    if (auto it = order_chi2.find(r); it != order_chi2.end()) fit.order_reduced_chi2 = it->second;
    model.ranges.emplace(r, std::move(fit));
  }
  model.rf.emplace(kTopRangeDbm, UncertainValue(1.0));
  return model;
}

NonlinModel range_discontinuity(NonlinModel model, std::span<const NonlinRecord> records,
                                const RangeDiscontinuityOptions& options) {
  struct Key {
    int range;
    long long att1;
    long long att2;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::vector<double>> reads;
  for (const auto& rec : records) {
    validate(rec);
    reads[{rec.range.dbm(), setting_key(rec.att1_db), setting_key(rec.att2_db)}].push_back(rec.reading_w);
  }

  model.rf.clear();
  model.rf.emplace(kTopRangeDbm, UncertainValue(1.0));
  for (const auto& [r, fit] : model.ranges) {
    if (r == kTopRangeDbm) continue;
    const int upper = r + 10;
    const std::string pair = std::to_string(r) + "/" + std::to_string(upper) + " dBm";
    if (!model.ranges.contains(upper)) {
      throw DataError("missing overlap for range pair " + pair + ": no fit for " +
                      std::to_string(upper) + " dBm");
    }
    const RangeSetting lo = RangeSetting::from_dbm(r);
    const RangeSetting hi = RangeSetting::from_dbm(upper);

    std::vector<UncertainValue> ratios;
    std::vector<double> weights;
    for (const auto& [key, lo_reads] : reads) {
      if (key.range != r) continue;
      auto hi_it = reads.find({upper, key.att1, key.att2});
      if (hi_it == reads.end()) continue;
      const Stats sl = stats_of(lo_reads);
      const Stats sh = stats_of(hi_it->second);
      ratios.push_back(model.linearized(lo, UncertainValue(sl.mean)) /
                       model.linearized(hi, UncertainValue(sh.mean)));
      const double rel2 = (sl.se / sl.mean) * (sl.se / sl.mean) + (sh.se / sh.mean) * (sh.se / sh.mean);
      weights.push_back(rel2 > 0.0 ? 1.0 / (rel2 * ratios.back().value() * ratios.back().value()) : 0.0);
    }
    if (ratios.empty()) throw DataError("missing overlap for range pair " + pair);

    UncertainValue rf;
    double scatter_se = 0.0;
    const bool use_weights =
        options.weighted && std::all_of(weights.begin(), weights.end(), [](double w) { return w > 0.0; });
    if (use_weights) {
      const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
      UncertainValue acc;
      for (std::size_t i = 0; i < ratios.size(); ++i) acc += ratios[i] * (weights[i] / wsum);
      rf = acc;
      scatter_se = std::sqrt(1.0 / wsum);
    } else {
      rf = mean(ratios);
      if (ratios.size() > 1) {
        double ss = 0.0;
        for (const auto& x : ratios) ss += (x.value() - rf.value()) * (x.value() - rf.value());
        const auto n = static_cast<double>(ratios.size());
        scatter_se = std::sqrt(ss / (n - 1.0) / n);
      }
    }
    if (scatter_se > 0.0) rf = rf + UncertainValue::lift(0.0, scatter_se);
    model.rf.emplace(r, rf);
  }
  return model;
}

NonlinCorrection nonlin_correction(const NonlinModel& model, RangeSetting r, double reading_w) {
  const RangeFit& fit = model.range_fit(r);
  if (!(reading_w > 0.0)) throw DomainError("CF_NL: reading must be > 0");
  if (reading_w < 0.5 * fit.span_min_w || reading_w > 2.0 * fit.span_max_w) {
    std::ostringstream os;
    os << "CF_NL: reading " << reading_w << " W at " << r.to_string()
       << " is outside twice the fitted span [" << fit.span_min_w << ", " << fit.span_max_w << "] W";
    throw DomainError(os.str());
  }
  NonlinCorrection out;
  out.extrapolated = !model.in_span(r, reading_w);
  out.factor = reading_w / model.linearized(r, UncertainValue(reading_w)) * model.rf_chain(r);
  return out;
}

UncertainValue corrected_power(const NonlinModel& model, RangeSetting r, const UncertainValue& reading_w) {
  (void)nonlin_correction(model, r, reading_w.value());  // domain check
  return model.linearized(r, reading_w) / model.rf_chain(r);
}

}  // namespace sdem
