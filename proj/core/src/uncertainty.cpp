#include "sdem/uncertainty.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "sdem/errors.hpp"

namespace sdem {

namespace {

std::atomic<BaseId> g_next_id{1};

// Merges two sorted term lists as ca * a + cb * b. Terms that cancel to an
// exact zero derivative are dropped, which is what makes x - x exact.
std::vector<UncertainValue::Term> merge_terms(std::span<const UncertainValue::Term> a, double ca,
                                              std::span<const UncertainValue::Term> b,
                                              double cb) {
  std::vector<UncertainValue::Term> out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  auto push = [&out](BaseId id, double sigma, double d) {
    if (d != 0.0) out.push_back({id, sigma, d});
  };
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].id < b[j].id)) {
      push(a[i].id, a[i].sigma, ca * a[i].derivative);
      ++i;
    } else if (i == a.size() || b[j].id < a[i].id) {
      push(b[j].id, b[j].sigma, cb * b[j].derivative);
      ++j;
    } else {
      push(a[i].id, a[i].sigma, ca * a[i].derivative + cb * b[j].derivative);
      ++i;
      ++j;
    }
  }
  return out;
}

void require_finite(double v, const char* op) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string("non-finite result in ") + op);
  }
}

}  // namespace

BaseId new_base_id() noexcept { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

UncertainValue UncertainValue::lift(double value, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("lift: sigma must be finite and >= 0, got " + std::to_string(sigma));
  }
  UncertainValue out(value);
  if (sigma > 0.0) out.terms_.push_back({new_base_id(), sigma, 1.0});
  return out;
}

UncertainValue UncertainValue::from_terms(double value, std::vector<Term> terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& l, const Term& r) { return l.id < r.id; });
  UncertainValue out(value);
  for (const Term& t : terms) {
    if (t.sigma < 0.0) throw InvalidArgument("from_terms: negative base sigma");
    if (!out.terms_.empty() && out.terms_.back().id == t.id) {
      out.terms_.back().derivative += t.derivative;
    } else {
      out.terms_.push_back(t);
    }
  }
  std::erase_if(out.terms_, [](const Term& t) { return t.derivative == 0.0; });
  return out;
}

double UncertainValue::variance() const noexcept {
  double s = 0.0;
  for (const Term& t : terms_) {
    const double c = t.contribution();
    s += c * c;
  }
  return s;
}

double UncertainValue::sigma() const noexcept { return std::sqrt(variance()); }

double UncertainValue::relative_sigma() const noexcept {
  const double s = sigma();
  if (s == 0.0) return 0.0;
  return s / std::abs(value_);
}

double UncertainValue::derivative(BaseId id) const noexcept {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), id,
                             [](const Term& t, BaseId key) { return t.id < key; });
  return (it != terms_.end() && it->id == id) ? it->derivative : 0.0;
}

UncertainValue UncertainValue::combine(double value, const UncertainValue& a, double ca,
                                       const UncertainValue& b, double cb) {
  UncertainValue out(value);
  out.terms_ = merge_terms(a.terms_, ca, b.terms_, cb);
  return out;
}

UncertainValue UncertainValue::chain(double value, const UncertainValue& a, double factor) {
  UncertainValue out(value);
  out.terms_ = merge_terms(a.terms_, factor, {}, 0.0);
  return out;
}

UncertainValue UncertainValue::operator-() const { return chain(-value_, *this, -1.0); }

UncertainValue& UncertainValue::operator+=(const UncertainValue& rhs) { return *this = *this + rhs; }
UncertainValue& UncertainValue::operator-=(const UncertainValue& rhs) { return *this = *this - rhs; }
UncertainValue& UncertainValue::operator*=(const UncertainValue& rhs) { return *this = *this * rhs; }
UncertainValue& UncertainValue::operator/=(const UncertainValue& rhs) { return *this = *this / rhs; }

UncertainValue operator+(const UncertainValue& a, const UncertainValue& b) {
  return UncertainValue::combine(a.value_ + b.value_, a, 1.0, b, 1.0);
}

UncertainValue operator-(const UncertainValue& a, const UncertainValue& b) {
  return UncertainValue::combine(a.value_ - b.value_, a, 1.0, b, -1.0);
}

UncertainValue operator*(const UncertainValue& a, const UncertainValue& b) {
  return UncertainValue::combine(a.value_ * b.value_, a, b.value_, b, a.value_);
}

UncertainValue operator/(const UncertainValue& a, const UncertainValue& b) {
  if (b.value_ == 0.0) throw DomainError("division by zero (denominator value is 0)");
  const double q = a.value_ / b.value_;
  require_finite(q, "division");
  return UncertainValue::combine(q, a, 1.0 / b.value_, b, -q / b.value_);
}

UncertainValue operator+(const UncertainValue& a, double b) {
  return UncertainValue::chain(a.value_ + b, a, 1.0);
}
UncertainValue operator+(double a, const UncertainValue& b) { return b + a; }
UncertainValue operator-(const UncertainValue& a, double b) {
  return UncertainValue::chain(a.value_ - b, a, 1.0);
}
UncertainValue operator-(double a, const UncertainValue& b) {
  return UncertainValue::chain(a - b.value_, b, -1.0);
}
UncertainValue operator*(const UncertainValue& a, double b) {
  return UncertainValue::chain(a.value_ * b, a, b);
}
UncertainValue operator*(double a, const UncertainValue& b) { return b * a; }
UncertainValue operator/(const UncertainValue& a, double b) {
  if (b == 0.0) throw DomainError("division by zero (denominator value is 0)");
  return UncertainValue::chain(a.value_ / b, a, 1.0 / b);
}
UncertainValue operator/(double a, const UncertainValue& b) {
  if (b.value() == 0.0) throw DomainError("division by zero (denominator value is 0)");
  const double q = a / b.value();
  require_finite(q, "division");
  return UncertainValue::chain(q, b, -q / b.value());
}

UncertainValue pow(const UncertainValue& base, double exponent) {
  const double x = base.value();
  if (x == 0.0 && exponent < 1.0) throw DomainError("pow: zero base with exponent < 1");
  if (x < 0.0 && exponent != std::floor(exponent)) {
    throw DomainError("pow: negative base with non-integer exponent");
  }
  const double v = std::pow(x, exponent);
  require_finite(v, "pow");
  const double d = exponent == 0.0 ? 0.0 : exponent * std::pow(x, exponent - 1.0);
  return UncertainValue::chain(v, base, d);
}

UncertainValue pow(const UncertainValue& base, const UncertainValue& exponent) {
  const double x = base.value();
  if (!(x > 0.0)) throw DomainError("pow: base must be > 0 for an uncertain exponent");
  const double v = std::pow(x, exponent.value());
  require_finite(v, "pow");
  return UncertainValue::combine(v, base, exponent.value() * v / x, exponent, v * std::log(x));
}

UncertainValue log(const UncertainValue& x) {
  if (!(x.value() > 0.0)) {
    throw DomainError("log of non-positive value " + std::to_string(x.value()));
  }
  return UncertainValue::chain(std::log(x.value()), x, 1.0 / x.value());
}

UncertainValue exp(const UncertainValue& x) {
  const double v = std::exp(x.value());
  require_finite(v, "exp");
  return UncertainValue::chain(v, x, v);
}

UncertainValue sqrt(const UncertainValue& x) {
  if (!(x.value() > 0.0)) {
    throw DomainError("sqrt of non-positive value " + std::to_string(x.value()));
  }
  const double v = std::sqrt(x.value());
  return UncertainValue::chain(v, x, 0.5 / v);
}

double covariance(const UncertainValue& a, const UncertainValue& b) noexcept {
  const auto ta = a.terms();
  const auto tb = b.terms();
  double s = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < ta.size() && j < tb.size()) {
    if (ta[i].id < tb[j].id) {
      ++i;
    } else if (tb[j].id < ta[i].id) {
      ++j;
    } else {
      s += ta[i].contribution() * tb[j].contribution();
      ++i;
      ++j;
    }
  }
  return s;
}

double correlation(const UncertainValue& a, const UncertainValue& b) noexcept {
  const double sa = a.sigma();
  const double sb = b.sigma();
  if (sa == 0.0 || sb == 0.0) return 0.0;
  return covariance(a, b) / (sa * sb);
}

Eigen::MatrixXd covariance_matrix(std::span<const UncertainValue> values) {
  const auto n = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      cov(i, j) = cov(j, i) = covariance(values[i], values[j]);
    }
  }
  return cov;
}

std::vector<UncertainValue> correlated(std::span<const double> values, const Eigen::MatrixXd& cov) {
  const auto n = static_cast<Eigen::Index>(values.size());
  if (cov.rows() != n || cov.cols() != n) {
    throw InvalidArgument("correlated: covariance is " + std::to_string(cov.rows()) + "x" +
                          std::to_string(cov.cols()) + " for " + std::to_string(n) + " values");
  }
  Eigen::MatrixXd factor;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
      throw InvalidArgument("correlated: covariance is not positive semidefinite");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    factor = eig.eigenvectors() * root.asDiagonal();
  }

  std::vector<BaseId> ids(static_cast<std::size_t>(n));
  for (auto& id : ids) id = new_base_id();

  std::vector<UncertainValue> out;
  out.reserve(values.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<UncertainValue::Term> terms;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (factor(i, k) != 0.0) terms.push_back({ids[static_cast<std::size_t>(k)], 1.0, factor(i, k)});
    }
    out.push_back(UncertainValue::from_terms(values[static_cast<std::size_t>(i)], std::move(terms)));
  }
  return out;
}

UncertainValue mean(std::span<const UncertainValue> values) {
  if (values.empty()) throw InvalidArgument("mean of an empty set");
  UncertainValue sum;
  for (const auto& v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string to_string(const UncertainValue& x, int digits) {
  std::ostringstream os;
  os << std::setprecision(digits) << x.value() << " +/- " << x.sigma();
  return os.str();
}

}  // namespace sdem
