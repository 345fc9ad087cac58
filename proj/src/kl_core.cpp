#include "klsplit/kl_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

constexpr double kRatioSlack = 1e-9;
constexpr std::size_t kMaxEmptyAttempts = 1'000'000;

// Integral of phi'(s)^2 over [lo, hi], computed in log coordinates so that the
// t^(2 theta - 2) singularity at zero is smooth in the integration variable.
double integrate_dphi_squared(const Desingularizer& d, double lo, double hi) {
  if (lo == hi) return 0.0;
  const double sign = lo < hi ? 1.0 : -1.0;
  if (lo > hi) std::swap(lo, hi);
  auto integrand = [&d](double u) {
    const double s = std::exp(u);
    const double g = d.derivative(s);
    return g * g * s;
  };
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, std::log(lo), std::log(hi), 15, 1e-12);
  return sign * v;
}

// Solves Phi(t) = u for a decreasing Phi by bisection in log t.
double invert_decreasing(const std::function<double(double)>& Phi, double u, double t_hint,
                         double t_max) {
  double lo = t_hint;
  double hi = t_hint;
  // Phi(lo) >= u >= Phi(hi)
  for (int i = 0; i < 2000 && Phi(lo) < u; ++i) {
    lo *= 0.5;
    if (lo < std::numeric_limits<double>::min()) return lo;
  }
  for (int i = 0; i < 2000 && Phi(hi) > u; ++i) {
    hi = std::min(hi * 2.0, t_max);
    if (hi >= t_max) break;
  }
  double a = std::log(lo);
  double b = std::log(hi);
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    const double mid = 0.5 * (a + b);
    if (Phi(std::exp(mid)) > u) {
      a = mid;
    } else {
      b = mid;
    }
  }
  return std::exp(0.5 * (a + b));
}

}  // namespace

Desingularizer Desingularizer::power(double C, double theta, double eta) {
  if (!(C > 0.0)) throw DomainError("power desingularizer: C must be positive");
  if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("power desingularizer: theta must lie in (0,1]");
  if (!(eta > 0.0)) throw DomainError("power desingularizer: eta must be positive");
  Desingularizer d;
  d.kind_ = Kind::Power;
  d.C_ = C;
  d.theta_ = theta;
  d.eta_ = eta;
  return d;
}

Desingularizer Desingularizer::general(ScalarFn phi, ScalarFn dphi, double eta) {
  if (!phi || !dphi) throw DomainError("general desingularizer: phi and phi' are required");
  if (!(eta > 0.0)) throw DomainError("general desingularizer: eta must be positive");
  Desingularizer d;
  d.kind_ = Kind::General;
  d.eta_ = eta;
  d.phi_ = std::move(phi);
  d.dphi_ = std::move(dphi);
  return d;
}

void Desingularizer::check_domain(double t) const {
  if (!(t >= 0.0) || !(t < eta_))
    throw DomainError("desingularizer evaluated outside [0, eta): t = " + std::to_string(t));
}

double Desingularizer::value(double t) const {
  check_domain(t);
  if (t == 0.0) return 0.0;
  if (kind_ == Kind::Power) return C_ / theta_ * std::pow(t, theta_);
  return phi_(t);
}

double Desingularizer::derivative(double t) const {
  check_domain(t);
  if (kind_ == Kind::Power) {
    if (theta_ == 1.0) return C_;
    if (t == 0.0) return std::numeric_limits<double>::infinity();
    return C_ * std::pow(t, theta_ - 1.0);
  }
  return dphi_(t);
}

double phi_eval(const Desingularizer& d, double t) { return d.value(t); }

double phi_tilde(const Desingularizer& d, double t) { return std::max(d.value(t), std::sqrt(t)); }

PhiPrimitive phi_primitive(const Desingularizer& d) {
  PhiPrimitive out;
  if (d.kind() == Desingularizer::Kind::Power) {
    const double C2 = d.C() * d.C();
    const double theta = d.theta();
    if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("phi_primitive: theta outside (0,1]");
    if (theta == 0.5) {
      out.Phi = [C2](double t) { return -C2 * std::log(t); };
      out.inverse = [C2](double u) { return std::exp(-u / C2); };
      out.finite_at_zero = false;
    } else {
      const double e = 2.0 * theta - 1.0;
      out.Phi = [C2, e](double t) { return -C2 * std::pow(t, e) / e; };
      out.inverse = [C2, e](double u) { return std::pow(-e * u / C2, 1.0 / e); };
      out.finite_at_zero = e > 0.0;
    }
    out.anchor = 1.0;
    return out;
  }

  // General kind: Phi(t) = int_t^{t0} phi'(s)^2 ds, anchored at t0 = eta/2
  // (or 1 when eta stands for infinity).
  const double t0 = d.eta() < kUnboundedEta / 4 ? 0.5 * d.eta() : 1.0;
  out.anchor = t0;
  out.Phi = [d, t0](double t) {
    if (!(t > 0.0)) throw DomainError("phi_primitive: Phi evaluated at t <= 0");
    return integrate_dphi_squared(d, t, t0);
  };

  // Finiteness at 0 from the decay of integrals over successive decades: with a
  // geometric ratio q < 1 the tail sum converges (Richardson-style extrapolation).
  std::vector<double> increments;
  for (int j = 1; j <= 9; ++j) {
    const double hi = t0 * std::pow(10.0, -j);
    const double lo = hi * 0.1;
    increments.push_back(integrate_dphi_squared(d, lo, hi));
  }
  bool finite = true;
  for (std::size_t j = increments.size() - 3; j + 1 < increments.size(); ++j) {
    const double q = increments[j + 1] / increments[j];
    if (!(q < 0.9)) finite = false;
  }
  out.finite_at_zero = finite;

  const double eta = d.eta();
  auto Phi = out.Phi;
  out.inverse = [Phi, t0, eta](double u) { return invert_decreasing(Phi, u, t0, eta); };
  return out;
}

bool KLRegion::contains(const Vector& x, double fx) const {
  if (x.size() != x_star.size()) throw ShapeError("KLRegion: dimension mismatch");
  if (!((x - x_star).norm() < delta)) return false;
  const bool lower = strict ? (fx > f_star) : (fx >= f_star);
  return lower && fx < f_star + eta;
}

void to_json(nlohmann::json& j, const KLReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  j = nlohmann::json{{"min_ratio", r.min_ratio},
                     {"violations", r.violations},
                     {"samples_accepted", r.samples_accepted},
                     {"attempts", r.attempts},
                     {"points", pts}};
}

KLReport kl_check(const ScalarField& f_oracle, const ScalarField& slope_oracle,
                  const KLRegion& region, const Desingularizer& d, std::size_t samples,
                  std::uint64_t seed) {
  if (samples == 0) throw DomainError("kl_check: samples must be positive");
  const Eigen::Index n = region.x_star.size();
  if (n == 0) throw ShapeError("kl_check: empty reference point");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double band = std::min(region.eta, d.eta());
  const std::size_t cap = std::max<std::size_t>(kMaxEmptyAttempts, 100 * samples);

  KLReport report;
  Vector x(n);
  while (report.samples_accepted < samples && report.attempts < cap) {
    ++report.attempts;
    for (Eigen::Index i = 0; i < n; ++i) x[i] = normal(rng);
    const double nrm = x.norm();
    if (nrm == 0.0) continue;
    const double radius = region.delta * std::pow(unif(rng), 1.0 / static_cast<double>(n));
    x = region.x_star + (radius / nrm) * x;
    if (!((x - region.x_star).norm() < region.delta)) continue;

    const double fx = f_oracle(x);
    const double gap = fx - region.f_star;
    if (!(gap > 0.0 && gap < band)) {
      if (report.samples_accepted == 0 && report.attempts >= kMaxEmptyAttempts)
        throw RegionEmptyError("kl_check: no sample landed in the strict region");
      continue;
    }
    ++report.samples_accepted;
    const double ratio = d.derivative(gap) * slope_oracle(x);
    report.min_ratio = std::min(report.min_ratio, ratio);
    if (!(ratio >= 1.0 - kRatioSlack)) {
      ++report.violations;
      report.points.push_back(x);
    }
  }
  if (report.samples_accepted == 0)
    throw RegionEmptyError("kl_check: no sample landed in the strict region");
  return report;
}

Desingularizer power_exponent_for_potential(double q) {
  if (!(q > 1.0)) throw DomainError("power_exponent_for_potential: q must exceed 1");
  return Desingularizer::power(1.0 / q, 1.0 / q);
}

}  // namespace klsplit
