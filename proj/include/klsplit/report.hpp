#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace klsplit {

enum class Verdict { Pass, Fail, Inconclusive };

std::string to_string(Verdict v);
void to_json(nlohmann::json& j, Verdict v);

/// One failed inequality: where, and by how much (negative residual = violated).
struct Violation {
  std::size_t k = 0;
  std::size_t block = 0;
  double residual = 0.0;
};

void to_json(nlohmann::json& j, const Violation& v);

/// Outcome of checking a family of inequalities along a trace.
struct CheckReport {
  std::string name;
  Verdict verdict = Verdict::Pass;
  std::size_t checked = 0;
  std::vector<Violation> violations;
  /// Named sub-results and reported constants.
  nlohmann::json details = nlohmann::json::object();

  bool passed() const noexcept { return verdict == Verdict::Pass; }
};

void to_json(nlohmann::json& j, const CheckReport& r);

/// Finite-horizon l1-membership heuristic.
///
/// Fits log|u_k| against log(k+1) on the second half of the window. A decay
/// exponent below -1.05 reads as summable, above -0.95 as not summable, and in
/// between as inconclusive. A tail that is identically zero reads as summable.
struct SummabilityFit {
  enum class Call { Summable, NotSummable, Inconclusive };
  Call call = Call::Inconclusive;
  double exponent = 0.0;
  double partial_sum = 0.0;
};

inline constexpr double kSummableExponent = -1.05;
inline constexpr double kDivergentExponent = -0.95;

SummabilityFit summability(std::span<const double> seq, std::size_t horizon);

/// Verdict for "this sequence is NOT in l1".
Verdict not_summable_verdict(const SummabilityFit& fit);
/// Verdict for "this sequence IS in l1".
Verdict summable_verdict(const SummabilityFit& fit);

void to_json(nlohmann::json& j, const SummabilityFit& f);

}  // namespace klsplit
