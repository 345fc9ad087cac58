#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "klsplit/afb_engine.hpp"
#include "klsplit/block_vector.hpp"
#include "klsplit/metric_ops.hpp"
#include "klsplit/report.hpp"
#include "klsplit/trace.hpp"

namespace klsplit {

using GradientFn = std::function<Vector(const Vector&)>;
using HessianFn = std::function<Matrix(const Vector&)>;

/// Which element of the generalized Hessian to sample.
struct HessianMode {
  enum class Kind { Analytic, FiniteDifference, UserElement };
  Kind kind = Kind::FiniteDifference;
  /// Central-difference step; 0 selects 1e-5 (1 + |x|).
  double h_fd = 0.0;
  HessianFn hessian;  // Analytic or UserElement

  static HessianMode analytic(HessianFn H) { return {Kind::Analytic, 0.0, std::move(H)}; }
  static HessianMode finite_difference(double h = 0.0) { return {Kind::FiniteDifference, h, {}}; }
  static HessianMode user_element(HessianFn H) { return {Kind::UserElement, 0.0, std::move(H)}; }
};

/// Symmetric sample of the generalized Hessian of h at x. ParameterError when
/// the finite-difference step underflows relative to x.
Matrix generalized_hessian_sample(const GradientFn& grad, const Vector& x, const HessianMode& mode);

/// proj_PSD(H) + epsilon I.
SpdOperator lm_metric(const Matrix& H, double epsilon);

/// Metric projection onto C: argmin_{y in C} |y - v|_A.
using MetricProjector = std::function<Vector(const SpdOperator&, const Vector&)>;

/// Projector built from an indicator prox oracle (closed form or inner solver).
MetricProjector projector_from(const ProxOracle& indicator);

/// proj_C^A(x - lambda A^{-1} grad).
Vector projected_newton_step(const Vector& x, const Vector& grad, const SpdOperator& A, double lambda,
                             const MetricProjector& project);

/// Step sizes: max lambda_k < epsilon / L, (lambda_k) not summable (heuristic),
/// sup lambda_{k+1} / lambda_k <= ratio_threshold.
CheckReport lm_schedule_check(std::span<const double> lambda, double epsilon, double L, std::size_t horizon,
                              double ratio_threshold = 1e3);

/// min h(x) over C, h with L-Lipschitz gradient; C given by an indicator oracle.
struct SmoothProblem {
  Eigen::Index dim = 0;
  std::function<double(const Vector&)> h;
  GradientFn grad;
  double L = 0.0;
  ProxOracle constraint = ProxOracle::zero();
};

struct LmConfig {
  double epsilon = 1e-3;
  std::function<double(std::size_t)> lambda;
  HessianMode hessian = HessianMode::finite_difference();
  /// A_k = exact Hessian, lambda = 1, no regularization. Outside the guaranteed schedule.
  bool pure_newton = false;
  /// Horizon over which the step-size schedule is validated before running.
  std::size_t check_horizon = 1000;

  static LmConfig constant(double epsilon, double lambda);
};

/// Projected Newton through the engine with p = 1, g = indicator of C and
/// metric (1/lambda_k) lm_metric(H_k, epsilon). A schedule violating
/// lambda_k < epsilon / L is refused with ScheduleError before iterating.
IterateTrace run_lm(const SmoothProblem& problem, const LmConfig& config, const StoppingRule& stop,
                    const Vector& x0, const RunOptions& options = {});

}  // namespace klsplit
