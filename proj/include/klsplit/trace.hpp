#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "klsplit/block_vector.hpp"
#include "klsplit/errors.hpp"
#include "klsplit/metric_ops.hpp"

namespace klsplit {

/// One iterate of a descent method.
///
/// x is the monitored sequence. With errors on it is the error-free companion
/// Y, and x_actual / f_actual hold the perturbed iterate X.
///
/// Index conventions: step_norm on record k is |x^k - x^{k-1}| (absent on
/// record 0); a holds a_k; b and eps hold b_k and eps_k, so the pair used by
/// the relative-error inequality at k+1 sits on record k+1. alpha and beta
/// bound the metrics of the sweep that leaves record k.
struct IterateRecord {
  std::size_t k = 0;
  std::optional<BlockVector> x;
  std::optional<BlockVector> x_actual;
  double f_val = 0.0;
  std::optional<double> f_actual;
  std::optional<double> step_norm;
  std::optional<double> slope_norm;
  std::optional<double> a, b, eps;
  std::optional<double> alpha, beta;
  std::optional<bool> region_flag;
};

enum class StopStatus { Converged, MaxIter, Diverged };

std::string to_string(StopStatus s);

/// Error bookkeeping for one block update of the method with errors.
struct HERecord {
  std::size_t k = 0;
  std::size_t block = 0;
  Vector r;         // r_i^k
  Vector s;         // s_i^k
  Vector dy;        // y_i^{k+1} - y_i^k
  double S_norm = 0.0;  // |S_i^k|
  SpdOperator metric = SpdOperator::scaled_identity(1, 1.0);
  double mu = 0.0;
};

struct IterateTrace {
  std::vector<IterateRecord> records;
  StopStatus status = StopStatus::MaxIter;
  std::vector<HERecord> he;
  /// Free-form log entries (error fallbacks, warnings).
  std::vector<std::string> log;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  const IterateRecord& back() const { return records.back(); }
};

/// Non-finite objective value; carries the trace up to the failure.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, IterateTrace partial)
      : Error(what), partial_(std::move(partial)) {}
  const IterateTrace& partial() const noexcept { return partial_; }

 private:
  IterateTrace partial_;
};

/// Per-record value helpers returning an empty vector entry as NaN.
std::vector<double> f_values(const IterateTrace& t);

}  // namespace klsplit
