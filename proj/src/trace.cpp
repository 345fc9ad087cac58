#include "klsplit/trace.hpp"

#include <limits>

namespace klsplit {

std::string to_string(StopStatus s) {
  switch (s) {
    case StopStatus::Converged:
      return "converged";
    case StopStatus::MaxIter:
      return "max_iter";
    case StopStatus::Diverged:
      return "diverged";
  }
  return "unknown";
}

std::vector<double> f_values(const IterateTrace& t) {
  std::vector<double> out;
  out.reserve(t.records.size());
  for (const auto& r : t.records) out.push_back(r.f_val);
  return out;
}

}  // namespace klsplit
