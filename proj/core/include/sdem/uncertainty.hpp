#pragma once

// First-order (delta-method) uncertainty arithmetic.
//
// Every UncertainValue is a value plus a sparse list of linear sensitivities
// to independent base variables. Two values that share a base variable are
// correlated, and the chain rule keeps those correlations exact: x - x has
// zero uncertainty, ratios of quantities measured with the same meter
// reading cancel, and so on. Fit parameters with a full covariance matrix are
// expressed through whitened base variables (see `correlated`).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sdem {

using BaseId = std::uint64_t;

/// Allocates a process-unique base-variable id. Thread safe.
BaseId new_base_id() noexcept;

class UncertainValue {
 public:
  /// Sensitivity to one independent base variable with standard
  /// uncertainty `sigma`. The contribution to the total standard
  /// uncertainty is `sigma * derivative`.
  struct Term {
    BaseId id;
    double sigma;
    double derivative;

    double contribution() const noexcept { return sigma * derivative; }
  };

  UncertainValue() = default;

  /// Exact constant (no base variables).
  explicit UncertainValue(double value) noexcept : value_(value) {}

  /// A fresh independent base variable. Throws InvalidArgument on a
  /// negative or non-finite sigma.
  static UncertainValue lift(double value, double sigma);

  /// Builds a value from explicit terms. Terms are merged by id.
  static UncertainValue from_terms(double value, std::vector<Term> terms);

  double value() const noexcept { return value_; }
  double sigma() const noexcept;
  double variance() const noexcept;
  /// sigma / |value|; infinite when value is zero and sigma is not.
  double relative_sigma() const noexcept;

  std::span<const Term> terms() const noexcept { return terms_; }
  /// Partial derivative with respect to base variable `id` (0 if absent).
  double derivative(BaseId id) const noexcept;
  bool is_exact() const noexcept { return terms_.empty(); }

  UncertainValue operator-() const;

  UncertainValue& operator+=(const UncertainValue& rhs);
  UncertainValue& operator-=(const UncertainValue& rhs);
  UncertainValue& operator*=(const UncertainValue& rhs);
  UncertainValue& operator/=(const UncertainValue& rhs);

  friend UncertainValue operator+(const UncertainValue& a, const UncertainValue& b);
  friend UncertainValue operator-(const UncertainValue& a, const UncertainValue& b);
  friend UncertainValue operator*(const UncertainValue& a, const UncertainValue& b);
  friend UncertainValue operator/(const UncertainValue& a, const UncertainValue& b);

  friend UncertainValue operator+(const UncertainValue& a, double b);
  friend UncertainValue operator+(double a, const UncertainValue& b);
  friend UncertainValue operator-(const UncertainValue& a, double b);
  friend UncertainValue operator-(double a, const UncertainValue& b);
  friend UncertainValue operator*(const UncertainValue& a, double b);
  friend UncertainValue operator*(double a, const UncertainValue& b);
  friend UncertainValue operator/(const UncertainValue& a, double b);
  friend UncertainValue operator/(double a, const UncertainValue& b);

  /// a * ca + b * cb with the given value; the general linear update every
  /// binary operation reduces to.
  static UncertainValue combine(double value, const UncertainValue& a, double ca,
                                const UncertainValue& b, double cb);

  /// Same value, every derivative scaled by `factor`.
  static UncertainValue chain(double value, const UncertainValue& a, double factor);

 private:
  double value_ = 0.0;
  std::vector<Term> terms_;  // sorted by id, no zero derivatives
};

UncertainValue pow(const UncertainValue& base, double exponent);
UncertainValue pow(const UncertainValue& base, const UncertainValue& exponent);
UncertainValue log(const UncertainValue& x);
UncertainValue exp(const UncertainValue& x);
UncertainValue sqrt(const UncertainValue& x);

double covariance(const UncertainValue& a, const UncertainValue& b) noexcept;
double correlation(const UncertainValue& a, const UncertainValue& b) noexcept;

/// Covariance matrix of a set of values, from their shared base variables.
Eigen::MatrixXd covariance_matrix(std::span<const UncertainValue> values);

/// Values jointly distributed with the given covariance. Each value is a
/// linear combination of fresh unit-variance base variables obtained from a
/// Cholesky factor of `cov` (eigen-decomposition when `cov` is only
/// positive semidefinite). Throws InvalidArgument when the dimensions
/// disagree or `cov` has a clearly negative eigenvalue.
std::vector<UncertainValue> correlated(std::span<const double> values,
                                       const Eigen::MatrixXd& cov);

/// Arithmetic mean; correlations among the inputs carry through.
UncertainValue mean(std::span<const UncertainValue> values);

/// "value +/- sigma" with `digits` significant digits.
std::string to_string(const UncertainValue& x, int digits = 6);

}  // namespace sdem
