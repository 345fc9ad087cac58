#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "json.hpp"
#include "klsplit/block_vector.hpp"

namespace klsplit {

/// Stand-in for an infinite validity radius eta.
inline constexpr double kUnboundedEta = std::numeric_limits<double>::max();

/// Desingularizing function phi of a Kurdyka-Lojasiewicz inequality.
///
/// Either the power family phi(t) = (C/theta) t^theta, theta in (0,1], or a
/// user-supplied concave phi with its derivative. Values are valid on [0, eta).
class Desingularizer {
 public:
  using ScalarFn = std::function<double(double)>;

  enum class Kind { Power, General };

  static Desingularizer power(double C, double theta, double eta = kUnboundedEta);
  static Desingularizer general(ScalarFn phi, ScalarFn dphi, double eta = kUnboundedEta);

  Kind kind() const noexcept { return kind_; }
  double C() const noexcept { return C_; }
  double theta() const noexcept { return theta_; }
  double eta() const noexcept { return eta_; }

  /// phi(t); throws DomainError outside [0, eta).
  double value(double t) const;
  /// phi'(t) for t in (0, eta). Returns +inf at t = 0 when phi' blows up there.
  double derivative(double t) const;

 private:
  Desingularizer() = default;
  void check_domain(double t) const;

  Kind kind_ = Kind::Power;
  double C_ = 1.0;
  double theta_ = 1.0;
  double eta_ = kUnboundedEta;
  ScalarFn phi_;
  ScalarFn dphi_;
};

double phi_eval(const Desingularizer& d, double t);

/// max(phi(t), sqrt(t)); the envelope used by the distance-by-gap estimate.
double phi_tilde(const Desingularizer& d, double t);

/// A primitive Phi of -(phi')^2 together with its inverse on (0, t0].
struct PhiPrimitive {
  std::function<double(double)> Phi;
  /// Phi^{-1}(u) for u in the range of Phi on (0, anchor].
  std::function<double(double)> inverse;
  bool finite_at_zero = false;
  /// Point where Phi vanishes for the General kind (power kinds use the closed form).
  double anchor = 0.0;
};

PhiPrimitive phi_primitive(const Desingularizer& d);

/// Ball-and-value-band region around a reference point x*.
///
/// Strict:  |x - x*| < delta and f* <  f(x) < f* + eta.
/// Relaxed: |x - x*| < delta and f* <= f(x) < f* + eta.
struct KLRegion {
  Vector x_star;
  double f_star = 0.0;
  double delta = 1.0;
  double eta = kUnboundedEta;
  bool strict = true;

  bool contains(const Vector& x, double fx) const;
};

struct KLReport {
  double min_ratio = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  std::size_t samples_accepted = 0;
  std::size_t attempts = 0;
  std::vector<Vector> points;  // violating points
};

void to_json(nlohmann::json& j, const KLReport& r);

using ScalarField = std::function<double(const Vector&)>;

/// Samples the strict region uniformly (rejection on the value band) and evaluates
/// phi'(f(x) - f*) * slope(x). A sample violates when the ratio < 1 - 1e-9.
KLReport kl_check(const ScalarField& f_oracle, const ScalarField& slope_oracle,
                  const KLRegion& region, const Desingularizer& d, std::size_t samples,
                  std::uint64_t seed);

/// Power(C = 1/q, theta = 1/q): the exact desingularizer of |x|^q at 0.
Desingularizer power_exponent_for_potential(double q);

}  // namespace klsplit
