#include "klsplit/report.hpp"

#include <cmath>
#include <limits>

#include "klsplit/errors.hpp"

namespace klsplit {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    case Verdict::Inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

void to_json(nlohmann::json& j, Verdict v) { j = to_string(v); }

void to_json(nlohmann::json& j, const Violation& v) {
  j = nlohmann::json{{"k", v.k}, {"block", v.block}, {"residual", v.residual}};
}

void to_json(nlohmann::json& j, const CheckReport& r) {
  j = nlohmann::json{{"name", r.name},
                     {"verdict", r.verdict},
                     {"checked", r.checked},
                     {"violations", r.violations},
                     {"details", r.details}};
}

SummabilityFit summability(std::span<const double> seq, std::size_t horizon) {
  if (seq.empty() || horizon == 0) throw DomainError("summability: empty sequence");
  if (horizon > seq.size()) throw DomainError("summability: sequence shorter than horizon");

  SummabilityFit fit;
  for (std::size_t k = 0; k < horizon; ++k) fit.partial_sum += std::abs(seq[k]);

  const std::size_t start = horizon / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  bool any_nonzero_tail = false;
  for (std::size_t k = start; k < horizon; ++k) {
    const double u = std::abs(seq[k]);
    if (u == 0.0) continue;
    any_nonzero_tail = true;
    if (!std::isfinite(u)) {
      fit.call = SummabilityFit::Call::NotSummable;
      fit.exponent = std::numeric_limits<double>::infinity();
      return fit;
    }
    const double x = std::log(static_cast<double>(k + 1));
    const double y = std::log(u);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (!any_nonzero_tail) {
    fit.call = SummabilityFit::Call::Summable;
    fit.exponent = -std::numeric_limits<double>::infinity();
    return fit;
  }
  if (n < 2) {
    fit.call = SummabilityFit::Call::Inconclusive;
    return fit;
  }
  const double denom = n * sxx - sx * sx;
  fit.exponent = denom > 0 ? (n * sxy - sx * sy) / denom : 0.0;
  if (fit.exponent < kSummableExponent) {
    fit.call = SummabilityFit::Call::Summable;
  } else if (fit.exponent > kDivergentExponent) {
    fit.call = SummabilityFit::Call::NotSummable;
  } else {
    fit.call = SummabilityFit::Call::Inconclusive;
  }
  return fit;
}

Verdict not_summable_verdict(const SummabilityFit& fit) {
  switch (fit.call) {
    case SummabilityFit::Call::NotSummable:
      return Verdict::Pass;
    case SummabilityFit::Call::Summable:
      return Verdict::Fail;
    default:
      return Verdict::Inconclusive;
  }
}

Verdict summable_verdict(const SummabilityFit& fit) {
  switch (fit.call) {
    case SummabilityFit::Call::Summable:
      return Verdict::Pass;
    case SummabilityFit::Call::NotSummable:
      return Verdict::Fail;
    default:
      return Verdict::Inconclusive;
  }
}

void to_json(nlohmann::json& j, const SummabilityFit& f) {
  const char* call = f.call == SummabilityFit::Call::Summable      ? "summable"
                     : f.call == SummabilityFit::Call::NotSummable ? "not_summable"
                                                                   : "inconclusive";
  j = nlohmann::json{{"call", call},
                     {"fitted_exponent", std::isfinite(f.exponent) ? nlohmann::json(f.exponent)
                                                                   : nlohmann::json(nullptr)},
                     {"partial_sum", f.partial_sum},
                     {"heuristic", "log-log decay fit on the second half of the window"}};
}

}  // namespace klsplit
