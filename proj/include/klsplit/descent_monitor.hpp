#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "klsplit/kl_core.hpp"
#include "klsplit/report.hpp"
#include "klsplit/trace.hpp"

namespace klsplit {

/// f(x^k) - f(x^{k+1}) - a_k |x^{k+1} - x^k|^2 >= -1e-10 (1 + |f(x^k)|).
CheckReport check_H1(const IterateTrace& trace);

/// b_{k+1} slope(x^{k+1}) <= |x^{k+1} - x^k| + eps_{k+1}, tolerance 1e-10 (1 + step).
CheckReport check_H2(const IterateTrace& trace);

/// b_{k+1} slope(x^k) <= |x^{k+1} - x^k|, same tolerance, no eps term.
CheckReport check_H2prime(const IterateTrace& trace);

/// Parameter hypotheses on the first `horizon` terms. details carries
/// a_lower, M and the two summability fits.
CheckReport check_H3(std::span<const double> a, std::span<const double> b,
                     std::span<const double> eps, std::size_t horizon);

struct Certificate {
  Verdict verdict = Verdict::Inconclusive;
  double final_slope = 0.0;
  double tail_step_sum = 0.0;
  double f_gap = 0.0;  // |f(x^last) - f(x^tail_start)|
  std::size_t tail_start = 0;
  std::string reason;
};

void to_json(nlohmann::json& j, const Certificate& c);

/// Pass iff the run converged, the last slope witness is <= tol, and the sum
/// of step norms over the last 10% of the trace is <= tol.
Certificate criticality_certificate(const IterateTrace& trace, double tol);

/// Sets region_flag on every record from the flattened iterate.
void flag_region(IterateTrace& trace, const KLRegion& region);

/// Inequality 2|x^{k+1}-x^k| <= |x^k-x^{k-1}| + (1/(a_k b_k)) [phi(r_k) - phi(r_{k+1})] + eps_k
/// at tolerance 1e-9, on indices where records k and k+1 are flagged in the
/// region. Uses M in place of 1/(a_k b_k) when the schedule is absent.
CheckReport check_step_bound(const IterateTrace& trace, const Desingularizer& d, double f_star,
                           double M);

struct RatePrediction {
  enum class Regime { FiniteTermination, Exponential, Polynomial, PhiForm };
  enum class Basis { StandardFinite, StandardExponential, StandardPolynomial, StrongFinite, StrongPrimitive };
  enum class Status { Ok, PrerequisiteFailed };

  Status status = Status::Ok;
  Regime regime = Regime::FiniteTermination;
  Basis basis = Basis::StandardFinite;
  double c = 0.0;                  // Exponential: values ~ exp(-c S)
  double exponent_values = 0.0;    // Polynomial: values ~ S^exponent_values
  double exponent_iterates = 0.0;  // Polynomial: |x - x*| ~ S^exponent_iterates
  double m = 0.0;                  // inf a_k b_{k+1}
  double b_bar = 0.0;              // sup b_k
  std::string description;
  /// Rate shapes up to constants as functions of S = sum of b_{n+1}.
  std::function<double(double)> values_rate;
  std::function<double(double)> iterates_rate;
};

std::string to_string(RatePrediction::Regime r);
std::string to_string(RatePrediction::Basis t);
void to_json(nlohmann::json& j, const RatePrediction& p);

/// Rate regime for a trace with schedule a_k, b_k (trace-aligned, b[k] = b_k).
/// Refuses (PrerequisiteFailed) when eps has a nonzero entry or a required
/// infimum is not positive.
RatePrediction predict_rates(const Desingularizer& d, std::span<const double> a,
                             std::span<const double> b, bool use_h2prime,
                             std::span<const double> eps = {});

struct RateFit {
  enum class Model { Exponential, Polynomial, FiniteTermination };
  Model chosen = Model::Exponential;
  double exp_slope = 0.0;  // d ln r / d S
  double exp_r2 = 0.0;
  double poly_slope = 0.0;  // d ln r / d ln S
  double poly_r2 = 0.0;
  bool finite_termination = false;
  std::size_t termination_index = 0;
  std::size_t points = 0;
  std::size_t first_index = 0;
};

std::string to_string(RateFit::Model m);
void to_json(nlohmann::json& j, const RateFit& f);

/// Least-squares fits of ln r_k against S_k = sum_{n<=k} b_n (exponential) and
/// against ln S_k (polynomial) on the last `tail_fraction` of the series.
RateFit fit_rates(std::span<const double> values, std::span<const double> b,
                  double tail_fraction = 0.8);

struct DiagnosticSeries {
  std::vector<std::size_t> k;
  std::vector<double> ratios;  // |x* - x^k| / phi_tilde(r_{k-1})
  std::vector<double> running_max;
  double sup = 0.0;
  std::size_t entry = 0;  // position in `ratios` where the region is entered
  std::vector<double> window_max;
  bool tail_nonincreasing = true;
  double bound = 0.0;  // max(1/sqrt(a_lower), M) when the schedule is present
};

void to_json(nlohmann::json& j, const DiagnosticSeries& s);

/// Ratios |x* - x^k| / phi_tilde(f(x^{k-1}) - f*). The series stops at the first
/// zero gap. Region entry is the first record flagged in the region (the first
/// record when no flags are present).
DiagnosticSeries distance_gap_diagnostic(const IterateTrace& trace, const Desingularizer& d,
                                         const BlockVector& x_star, double f_star);

}  // namespace klsplit
