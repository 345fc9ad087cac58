#include "klsplit/lm_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "klsplit/errors.hpp"

namespace klsplit {

Matrix generalized_hessian_sample(const GradientFn& grad, const Vector& x, const HessianMode& mode) {
  const Eigen::Index n = x.size();
  Matrix H;
  switch (mode.kind) {
    case HessianMode::Kind::Analytic:
    case HessianMode::Kind::UserElement:
      if (!mode.hessian) throw ParameterError("generalized_hessian_sample: no Hessian callable supplied");
      H = mode.hessian(x);
      break;
    case HessianMode::Kind::FiniteDifference: {
      if (!grad) throw ParameterError("generalized_hessian_sample: no gradient callable supplied");
      const double h = mode.h_fd > 0.0 ? mode.h_fd : 1e-5 * (1.0 + x.norm());
      H.resize(n, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const double width = xp[j] - xm[j];
        if (!(width > 0.0)) throw ParameterError("generalized_hessian_sample: finite-difference step underflows");
        H.col(j) = (grad(xp) - grad(xm)) / width;
      }
      break;
    }
  }
  if (H.rows() != n || H.cols() != n) throw ShapeError("generalized_hessian_sample: Hessian has the wrong shape");
  return 0.5 * (H + H.transpose());
}

SpdOperator lm_metric(const Matrix& H, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("lm_metric: epsilon must be positive");
  Matrix A = project_psd(H);
  A.diagonal().array() += epsilon;
  return SpdOperator::from_matrix(A);
}

MetricProjector projector_from(const ProxOracle& indicator) {
  return [indicator](const SpdOperator& A, const Vector& v) { return prox_in_metric(indicator, A, v); };
}

Vector projected_newton_step(const Vector& x, const Vector& grad, const SpdOperator& A, double lambda,
                             const MetricProjector& project) {
  if (!(lambda > 0.0)) throw DomainError("projected_newton_step: lambda must be positive");
  if (x.size() != grad.size() || x.size() != A.dim()) throw ShapeError("projected_newton_step: dimension mismatch");
  const Vector target = x - lambda * A.solve(grad);
  return project ? project(A, target) : target;
}

CheckReport lm_schedule_check(std::span<const double> lambda, double epsilon, double L, std::size_t horizon,
                              double ratio_threshold) {
  if (lambda.empty() || horizon == 0) throw DomainError("lm_schedule_check: empty schedule");
  if (lambda.size() < horizon) throw DomainError("lm_schedule_check: schedule shorter than horizon");

  CheckReport rep;
  rep.name = "lm_schedule";
  rep.checked = horizon;
  const double bound = L > 0.0 ? epsilon / L : std::numeric_limits<double>::infinity();

  double lambda_bar = 0.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    if (!(lambda[k] > 0.0)) throw DomainError("lm_schedule_check: step sizes must be positive");
    lambda_bar = std::max(lambda_bar, lambda[k]);
    if (!(lambda[k] < bound)) rep.violations.push_back({k, 0, bound - lambda[k]});
  }
  const Verdict v_bound = rep.violations.empty() ? Verdict::Pass : Verdict::Fail;

  const SummabilityFit fit = summability(lambda.first(horizon), horizon);
  const Verdict v_sum = not_summable_verdict(fit);

  double max_ratio = 0.0;
  std::size_t arg = 0;
  for (std::size_t k = 0; k + 1 < horizon; ++k) {
    const double r = lambda[k + 1] / lambda[k];
    if (r > max_ratio) {
      max_ratio = r;
      arg = k;
    }
  }
  const Verdict v_ratio = max_ratio <= ratio_threshold ? Verdict::Pass : Verdict::Fail;
  if (v_ratio == Verdict::Fail) rep.violations.push_back({arg, 0, ratio_threshold - max_ratio});

  if (v_bound == Verdict::Fail || v_ratio == Verdict::Fail || v_sum == Verdict::Fail) {
    rep.verdict = Verdict::Fail;
  } else {
    rep.verdict = v_sum;
  }
  rep.details = {{"bound", v_bound},
                 {"lambda_bar", lambda_bar},
                 {"epsilon_over_L", bound},
                 {"not_summable", v_sum},
                 {"lambda_fit", fit},
                 {"ratio", v_ratio},
                 {"max_ratio", max_ratio},
                 {"ratio_threshold", ratio_threshold}};
  return rep;
}

LmConfig LmConfig::constant(double epsilon, double lambda) {
  LmConfig c;
  c.epsilon = epsilon;
  c.lambda = [lambda](std::size_t) { return lambda; };
  return c;
}

IterateTrace run_lm(const SmoothProblem& problem, const LmConfig& config, const StoppingRule& stop,
                    const Vector& x0, const RunOptions& options) {
  if (problem.dim <= 0 || x0.size() != problem.dim) throw ShapeError("run_lm: dimension mismatch");
  if (!problem.h || !problem.grad) throw ShapeError("run_lm: h and its gradient are required");

  RunOptions opts = options;
  if (config.pure_newton) {
    opts.override_hp = true;
  } else {
    if (!config.lambda) throw ConfigError("run_lm: no step-size schedule");
    const std::size_t horizon = std::max<std::size_t>(1, std::min(config.check_horizon, stop.max_iter + 1));
    std::vector<double> lam(horizon);
    for (std::size_t k = 0; k < horizon; ++k) lam[k] = config.lambda(k);
    const CheckReport rep = lm_schedule_check(lam, config.epsilon, problem.L, horizon);
    if (rep.details["bound"] == "fail") {
      std::ostringstream msg;
      msg << "step sizes violate lambda_bar < epsilon/L: lambda_bar = " << rep.details["lambda_bar"].get<double>()
          << ", epsilon/L = " << rep.details["epsilon_over_L"].get<double>();
      throw ScheduleError(msg.str(), rep.violations.front().k);
    }
    if (rep.details["ratio"] == "fail") {
      const std::size_t k = rep.violations.back().k;
      throw ScheduleError("step sizes violate sup lambda_{k+1}/lambda_k < inf at k=" + std::to_string(k), k);
    }
  }

  BlockProblem bp;
  bp.dims = {problem.dim};
  bp.h_eval = [h = problem.h](const BlockVector& X) { return h(X[0]); };
  bp.h_grad_block = [g = problem.grad](std::size_t, const BlockVector& X) { return g(X[0]); };
  bp.L = problem.L;
  bp.g = {problem.constraint};

  MetricSchedule ms;
  ms.alpha_lower = config.pure_newton ? 0.0 : config.epsilon;
  ms.provider = [problem, config](std::size_t, std::size_t k, const AfbState& s) {
    const Matrix H = generalized_hessian_sample(problem.grad, s.X[0], config.hessian);
    if (config.pure_newton) return SpdOperator::from_matrix(H);
    return lm_metric(H, config.epsilon).scaled(1.0 / config.lambda(k));
  };
  if (!config.pure_newton) {
    const double lam0 = config.lambda(0);
    ms.alpha_lower = config.epsilon / lam0;
  }

  IterateTrace trace = run(bp, ms, ErrorModel::none(), stop, BlockVector{x0}, opts);
  if (config.pure_newton) trace.log.push_back("pure Newton diagnostic: outside the guaranteed step-size schedule");
  return trace;
}

}  // namespace klsplit
