#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "klsplit/block_vector.hpp"
#include "klsplit/metric_ops.hpp"
#include "klsplit/report.hpp"
#include "klsplit/trace.hpp"

namespace klsplit {

/// f(x_1..x_p) = h(x_1..x_p) + sum_i g_i(x_i) with a blockwise gradient of h.
///
/// L is the common Lipschitz constant of the partial gradients x_i -> grad_i h.
struct BlockProblem {
  std::vector<Eigen::Index> dims;
  std::function<double(const BlockVector&)> h_eval;
  std::function<Vector(std::size_t, const BlockVector&)> h_grad_block;
  double L = 0.0;
  std::vector<ProxOracle> g;

  std::size_t p() const noexcept { return dims.size(); }
  double g_sum(const BlockVector& X) const;
  double f(const BlockVector& X) const { return h_eval(X) + g_sum(X); }
  /// ShapeError on inconsistent dims, missing callables or a bad point.
  void validate() const;
  void validate_point(const BlockVector& X) const;
};

/// X is the iterate, Y its error-free companion (equal to X when errors are off).
struct AfbState {
  BlockVector X;
  BlockVector Y;
  std::size_t k = 0;

  static AfbState at(const BlockVector& X0) { return {X0, X0, 0}; }
};

/// Metric A_{i,k} for block i at sweep k, given the partially updated state.
using MetricProvider = std::function<SpdOperator(std::size_t i, std::size_t k, const AfbState& state)>;

struct MetricSchedule {
  MetricProvider provider;
  double alpha_lower = 0.0;

  /// A_{i,k} = scale * I for every block and sweep.
  static MetricSchedule constant(const std::vector<Eigen::Index>& dims, double scale);
  /// A_{i,k} = scales[i] * I.
  static MetricSchedule per_block(const std::vector<Eigen::Index>& dims, std::vector<double> scales);
};

/// Controlled errors r_i^k (inside the prox) and s_i^k (added to its output).
///
/// Random mode draws seeded directions and scales them so that the three error
/// conditions hold; prescribed mode takes the errors verbatim and, when
/// enforce is false, does not check anything.
struct ErrorModel {
  using ErrorFn = std::function<Vector(std::size_t k, std::size_t i, const AfbState& state)>;

  bool enabled = false;
  double sigma = 0.0;
  double rho = 1.0;
  std::function<double(std::size_t)> mu = [](std::size_t) { return 0.0; };
  std::uint64_t seed = 0;
  ErrorFn prescribed_r;  // r_i^k
  ErrorFn prescribed_s;  // s_i^{k}, queried with the index of the iterate it perturbs
  bool enforce = true;

  static ErrorModel none() { return {}; }
  static ErrorModel random(double sigma, double rho, std::function<double(std::size_t)> mu,
                           std::uint64_t seed);
  static ErrorModel prescribed(ErrorFn r, ErrorFn s);

  bool is_prescribed() const noexcept { return static_cast<bool>(prescribed_r) || static_cast<bool>(prescribed_s); }
  /// ParameterError unless (sigma + 1) / rho < alpha_lower / L.
  void validate(double alpha_lower, double L) const;
};

struct StoppingRule {
  double step_tol = 1e-10;
  double slope_tol = 1e-8;
  std::size_t max_iter = 100000;

  static StoppingRule max_iterations(std::size_t n) { return {0.0, 0.0, n}; }
};

struct StepResult {
  AfbState next;
  IterateRecord record;  // record for k+1: f, step, slope witness
  double alpha = 0.0;    // min over blocks of alpha(A_{i,k})
  double beta = 0.0;     // max over blocks of |||A_{i,k}|||
  std::vector<HERecord> he;
  std::vector<std::string> log;
  bool he_ok = true;
};

/// One cyclic sweep x_i <- prox_{g_i}^{A_i}(x_i - A_i^{-1} grad_i h(X_i^k)), i = 1..p.
StepResult afb_step(const BlockProblem& problem, const AfbState& state,
                    const std::vector<SpdOperator>& metrics, const InnerSolverOptions& inner = {});

/// The sweep with errors; identical to afb_step when errors are disabled.
StepResult afbe_step(const BlockProblem& problem, const AfbState& state,
                     const std::vector<SpdOperator>& metrics, const ErrorModel& errors, std::size_t k,
                     const InnerSolverOptions& inner = {});

struct Witness {
  BlockVector W;
  double norm = 0.0;
};

/// w_i = grad_i h(X^{k+1}) - grad_i h(X_i^k) - A_i (x_i^{k+1} - x_i^k), an element
/// of the subdifferential of f at X^{k+1} for consecutive error-free iterates.
Witness subgradient_witness(const BlockProblem& problem, const AfbState& prev, const AfbState& next,
                            const std::vector<SpdOperator>& metrics);

/// Trace-aligned schedule: a[k] = a_k; b[k], eps[k] for k >= 1 (b[0], eps[0] are NaN).
struct Schedule {
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> eps;
};

/// a_k = (rho alpha_k - L (sigma / sqrt p + 1)) / 2,
/// b_{k+1} = 1 / (p^2 (1 + sigma) (beta_k + L)),
/// eps_{k+1} = beta_k mu_k / (p (1 + sigma) (beta_k + L)).
/// ScheduleError at the first k with rho alpha_k <= L (sigma / sqrt p + 1).
Schedule derive_schedule(std::span<const double> alpha, std::span<const double> beta,
                                       double sigma, double rho, std::span<const double> mu, double L,
                                       std::size_t p);

/// Per-(k, i) check of the three error conditions at tolerance 1e-10.
CheckReport he_check(const std::vector<HERecord>& records, double sigma, double rho);

struct RunOptions {
  /// Run even when a sweep violates rho alpha_k > L (sigma / sqrt p + 1); a_k may go negative.
  bool override_hp = false;
  bool store_iterates = true;
  InnerSolverOptions inner;
};

/// Iterates cyclic sweeps until the stopping rule fires and attaches the
/// explicit schedule. DivergenceError (with the partial trace) on a non-finite value.
IterateTrace run(const BlockProblem& problem, const MetricSchedule& metrics, const ErrorModel& errors,
                 const StoppingRule& stop, const BlockVector& x0, const RunOptions& options = {});

}  // namespace klsplit
