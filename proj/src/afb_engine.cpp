#include "klsplit/afb_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

constexpr double kHeTol = 1e-10;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using BlockMetricFn = std::function<SpdOperator(std::size_t i, const AfbState& partial)>;

struct HeResiduals {
  double he1, he2, he3;
};

HeResiduals he_residuals(const HERecord& h, double sigma, double rho) {
  const double dy = h.dy.norm();
  HeResiduals out;
  out.he1 = 0.5 * sigma * dy - h.S_norm;
  out.he2 = 0.5 * sigma * dy + h.mu - h.r.norm();
  out.he3 = 0.5 * (1.0 - rho) * h.metric.norm_sq(h.dy) - h.metric.inner(h.r + h.s, h.dy);
  return out;
}

bool he_holds(const HERecord& h, double sigma, double rho) {
  const HeResiduals r = he_residuals(h, sigma, rho);
  return r.he1 >= -kHeTol && r.he2 >= -kHeTol && r.he3 >= -kHeTol;
}

Vector unit_direction(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = normal(rng);
  const double nv = v.norm();
  return nv > 0.0 ? Vector(v / nv) : v;
}

Vector checked_error(const Vector& e, Eigen::Index n, const char* what) {
  if (e.size() != n) throw ShapeError(std::string("prescribed ") + what + " has the wrong size");
  return e;
}

// One cyclic sweep. s_scale multiplies the random s-errors (ignored otherwise).
StepResult sweep(const BlockProblem& P, const AfbState& state, const BlockMetricFn& metric_for,
                 const ErrorModel& em, std::size_t k, double s_scale, const InnerSolverOptions& inner,
                 bool store_iterates) {
  const std::size_t p = P.p();
  const bool errors = em.enabled;
  const bool random_errors = errors && !em.is_prescribed();
  const double mu_k = errors ? em.mu(k) : 0.0;

  StepResult out;
  AfbState cur{state.X, state.Y, k};
  std::vector<Vector> grads(p), rs(p);
  std::vector<SpdOperator> metrics;
  metrics.reserve(p);
  out.alpha = std::numeric_limits<double>::infinity();
  out.beta = 0.0;

  for (std::size_t i = 0; i < p; ++i) {
    const Eigen::Index n = P.dims[i];
    const SpdOperator A = metric_for(i, cur);
    if (A.dim() != n) throw ShapeError("metric dimension does not match block " + std::to_string(i));
    out.alpha = std::min(out.alpha, A.alpha());
    out.beta = std::max(out.beta, A.beta());

    grads[i] = P.h_grad_block(i, cur.X);
    const Vector v0 = state.X[i] - A.solve(grads[i]);
    const Vector y_plain = prox_in_metric(P.g[i], A, v0, inner);
    const Vector s_old = state.X[i] - state.Y[i];

    Vector r = Vector::Zero(n);
    Vector y = y_plain;
    Vector s_new = Vector::Zero(n);
    if (errors) {
      std::seed_seq seq{em.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)};
      std::mt19937_64 rng(seq);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      if (em.prescribed_r) {
        r = checked_error(em.prescribed_r(k, i, cur), n, "r");
      } else if (random_errors) {
        const double dt = (y_plain - state.Y[i]).norm();
        r = unif(rng) * 0.5 * (0.5 * em.sigma * dt + mu_k) * unit_direction(rng, n);
      }
      if (r.squaredNorm() > 0.0) y = prox_in_metric(P.g[i], A, v0 + r, inner);

      if (random_errors && r.squaredNorm() > 0.0) {
        const Vector dy = y - state.Y[i];
        const bool he2 = r.norm() <= 0.5 * em.sigma * dy.norm() + mu_k;
        const bool he3 = A.inner(r + s_old, dy) <= 0.5 * (1.0 - em.rho) * A.norm_sq(dy);
        if (!he2 || !he3) {
          std::ostringstream msg;
          msg << "k=" << k << " block=" << i << ": inner error dropped (" << (he2 ? "" : "HE2 ") << (he3 ? "" : "HE3")
              << ")";
          out.log.push_back(msg.str());
          r.setZero();
          y = y_plain;
        }
      }

      if (em.prescribed_s) {
        s_new = checked_error(em.prescribed_s(k + 1, i, cur), n, "s");
      } else if (random_errors && s_scale > 0.0) {
        const double dy = (y - state.Y[i]).norm();
        const double mag = s_scale * 0.25 * em.sigma * dy / std::sqrt(static_cast<double>(p));
        s_new = mag * unit_direction(rng, n);
      }
    }

    rs[i] = r;
    cur.Y[i] = y;
    cur.X[i] = y + s_new;

    if (errors) {
      HERecord h;
      h.k = k;
      h.block = i;
      h.r = r;
      h.s = s_old;
      h.dy = y - state.Y[i];
      h.metric = A;
      h.mu = mu_k;
      out.he.push_back(std::move(h));
    }
    metrics.push_back(A);
  }

  // S_i^k = (s_1^{k+1}, ..., s_{i-1}^{k+1}, s_i^k, ..., s_p^k)
  if (errors) {
    for (std::size_t i = 0; i < p; ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const Vector s = j < i ? Vector(cur.X[j] - cur.Y[j]) : Vector(state.X[j] - state.Y[j]);
        sq += s.squaredNorm();
      }
      out.he[i].S_norm = std::sqrt(sq);
      if (em.enforce && !he_holds(out.he[i], em.sigma, em.rho)) out.he_ok = false;
    }
  }

  // slope witness at the monitored point Y^{k+1}
  BlockVector W = BlockVector::zeros(P.dims);
  for (std::size_t i = 0; i < p; ++i) {
    W[i] = P.h_grad_block(i, cur.Y) - grads[i] - metrics[i].apply(cur.Y[i] - state.X[i] - rs[i]);
  }

  cur.k = k + 1;
  IterateRecord& rec = out.record;
  rec.k = k + 1;
  rec.f_val = P.f(cur.Y);
  rec.step_norm = distance(cur.Y, state.Y);
  rec.slope_norm = W.norm();
  if (store_iterates) rec.x = cur.Y;
  if (errors) {
    rec.f_actual = P.f(cur.X);
    if (store_iterates) rec.x_actual = cur.X;
  }
  out.next = std::move(cur);
  return out;
}

Schedule explicit_schedule(std::span<const double> alpha, std::span<const double> beta, double sigma,
                           double rho, std::span<const double> mu, double L, std::size_t p, bool strict) {
  if (alpha.size() != beta.size() || mu.size() < alpha.size())
    throw ShapeError("derive_schedule: sequence lengths differ");
  if (p == 0) throw DomainError("derive_schedule: p must be positive");
  const double sp = std::sqrt(static_cast<double>(p));
  const double pd = static_cast<double>(p);
  const double floor = L * (sigma / sp + 1.0);

  Schedule s;
  s.a.resize(alpha.size());
  s.b.assign(alpha.size() + 1, kNaN);
  s.eps.assign(alpha.size() + 1, kNaN);
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    if (strict && !(rho * alpha[k] > floor)) {
      std::ostringstream msg;
      msg << "schedule infeasible at k=" << k << ": rho*alpha_k = " << rho * alpha[k]
          << " <= L(sigma/sqrt(p)+1) = " << floor;
      throw ScheduleError(msg.str(), k);
    }
    s.a[k] = 0.5 * (rho * alpha[k] - floor);
    s.b[k + 1] = 1.0 / (pd * pd * (1.0 + sigma) * (beta[k] + L));
    s.eps[k + 1] = beta[k] * mu[k] / (pd * (1.0 + sigma) * (beta[k] + L));
  }
  return s;
}

void attach_schedule(IterateTrace& trace, const BlockProblem& P, const ErrorModel& em) {
  const std::size_t sweeps = trace.size() > 0 ? trace.size() - 1 : 0;
  std::vector<double> alpha(sweeps), beta(sweeps), mu(sweeps);
  for (std::size_t k = 0; k < sweeps; ++k) {
    alpha[k] = trace.records[k].alpha.value_or(kNaN);
    beta[k] = trace.records[k].beta.value_or(kNaN);
    mu[k] = em.enabled ? em.mu(k) : 0.0;
  }
  const double sigma = em.enabled ? em.sigma : 0.0;
  const double rho = em.enabled ? em.rho : 1.0;
  const Schedule s = explicit_schedule(alpha, beta, sigma, rho, mu, P.L, P.p(), false);
  for (std::size_t k = 0; k < sweeps; ++k) trace.records[k].a = s.a[k];
  for (std::size_t k = 1; k <= sweeps; ++k) {
    trace.records[k].b = s.b[k];
    trace.records[k].eps = s.eps[k];
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double BlockProblem::g_sum(const BlockVector& X) const {
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) s += g[i].value(X[i]);
  return s;
}

void BlockProblem::validate() const {
  if (dims.empty()) throw ShapeError("BlockProblem: no blocks");
  if (g.size() != dims.size()) throw ShapeError("BlockProblem: one prox oracle per block is required");
  if (!h_eval || !h_grad_block) throw ShapeError("BlockProblem: h and its gradient are required");
  if (!(L >= 0.0) || !std::isfinite(L)) throw DomainError("BlockProblem: L must be finite and nonnegative");
  for (auto d : dims)
    if (d <= 0) throw ShapeError("BlockProblem: block dimensions must be positive");
}

void BlockProblem::validate_point(const BlockVector& X) const {
  if (X.dims() != dims) throw ShapeError("BlockProblem: point does not match block dimensions");
}

MetricSchedule MetricSchedule::constant(const std::vector<Eigen::Index>& dims, double scale) {
  return per_block(dims, std::vector<double>(dims.size(), scale));
}

MetricSchedule MetricSchedule::per_block(const std::vector<Eigen::Index>& dims, std::vector<double> scales) {
  if (scales.size() != dims.size()) throw ShapeError("MetricSchedule: one scale per block");
  std::vector<SpdOperator> ops;
  for (std::size_t i = 0; i < dims.size(); ++i) ops.push_back(SpdOperator::scaled_identity(dims[i], scales[i]));
  MetricSchedule m;
  m.alpha_lower = *std::min_element(scales.begin(), scales.end());
  m.provider = [ops](std::size_t i, std::size_t, const AfbState&) { return ops[i]; };
  return m;
}

ErrorModel ErrorModel::random(double sigma, double rho, std::function<double(std::size_t)> mu,
                              std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParameterError("ErrorModel: sigma must be nonnegative");
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("ErrorModel: rho must lie in (0,1]");
  ErrorModel e;
  e.enabled = true;
  e.sigma = sigma;
  e.rho = rho;
  if (mu) e.mu = std::move(mu);
  e.seed = seed;
  return e;
}

ErrorModel ErrorModel::prescribed(ErrorFn r, ErrorFn s) {
  ErrorModel e;
  e.enabled = true;
  e.prescribed_r = std::move(r);
  e.prescribed_s = std::move(s);
  e.enforce = false;
  return e;
}

void ErrorModel::validate(double alpha_lower, double L) const {
  if (!enabled) return;
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("ErrorModel: rho must lie in (0,1]");
  if (L == 0.0) return;
  if (!((sigma + 1.0) / rho < alpha_lower / L)) {
    std::ostringstream msg;
    msg << "ErrorModel: (sigma+1)/rho = " << (sigma + 1.0) / rho << " must be below alpha_lower/L = " << alpha_lower / L;
    throw ParameterError(msg.str());
  }
}

StepResult afb_step(const BlockProblem& problem, const AfbState& state,
                    const std::vector<SpdOperator>& metrics, const InnerSolverOptions& inner) {
  return afbe_step(problem, state, metrics, ErrorModel::none(), state.k, inner);
}

StepResult afbe_step(const BlockProblem& problem, const AfbState& state,
                     const std::vector<SpdOperator>& metrics, const ErrorModel& errors, std::size_t k,
                     const InnerSolverOptions& inner) {
  problem.validate();
  problem.validate_point(state.X);
  problem.validate_point(state.Y);
  if (metrics.size() != problem.p()) throw ShapeError("afb_step: one metric per block is required");
  const BlockMetricFn fn = [&metrics](std::size_t i, const AfbState&) { return metrics[i]; };
  StepResult res = sweep(problem, state, fn, errors, k, 1.0, inner, true);
  if (!std::isfinite(res.record.f_val)) throw DivergenceError("afb_step: non-finite objective", IterateTrace{});
  return res;
}

Witness subgradient_witness(const BlockProblem& problem, const AfbState& prev, const AfbState& next,
                            const std::vector<SpdOperator>& metrics) {
  problem.validate_point(prev.X);
  problem.validate_point(next.X);
  if (metrics.size() != problem.p()) throw ShapeError("subgradient_witness: one metric per block is required");
  Witness w;
  w.W = BlockVector::zeros(problem.dims);
  BlockVector Xi = prev.X;
  for (std::size_t i = 0; i < problem.p(); ++i) {
    const Vector g_mid = problem.h_grad_block(i, Xi);
    w.W[i] = problem.h_grad_block(i, next.X) - g_mid - metrics[i].apply(next.X[i] - prev.X[i]);
    Xi[i] = next.X[i];
  }
  w.norm = w.W.norm();
  return w;
}

Schedule derive_schedule(std::span<const double> alpha, std::span<const double> beta,
                                       double sigma, double rho, std::span<const double> mu, double L,
                                       std::size_t p) {
  return explicit_schedule(alpha, beta, sigma, rho, mu, L, p, true);
}

CheckReport he_check(const std::vector<HERecord>& records, double sigma, double rho) {
  CheckReport rep;
  rep.name = "HE";
  std::size_t v1 = 0, v2 = 0, v3 = 0;
  for (const auto& h : records) {
    const Eigen::Index n = h.metric.dim();
    if (h.r.size() != n || h.s.size() != n || h.dy.size() != n)
      throw DataError("he_check: malformed record at k=" + std::to_string(h.k));
    const HeResiduals r = he_residuals(h, sigma, rho);
    ++rep.checked;
    const double worst = std::min({r.he1, r.he2, r.he3});
    if (r.he1 < -kHeTol) ++v1;
    if (r.he2 < -kHeTol) ++v2;
    if (r.he3 < -kHeTol) ++v3;
    if (worst < -kHeTol) rep.violations.push_back({h.k, h.block, worst});
  }
  rep.verdict = rep.violations.empty() ? Verdict::Pass : Verdict::Fail;
  rep.details = {{"HE1_violations", v1}, {"HE2_violations", v2}, {"HE3_violations", v3}};
  return rep;
}

IterateTrace run(const BlockProblem& problem, const MetricSchedule& metrics, const ErrorModel& errors,
                 const StoppingRule& stop, const BlockVector& x0, const RunOptions& options) {
  problem.validate();
  problem.validate_point(x0);
  if (!metrics.provider) throw ConfigError("run: metric schedule has no provider");
  errors.validate(metrics.alpha_lower, problem.L);

  const double sigma = errors.enabled ? errors.sigma : 0.0;
  const double rho = errors.enabled ? errors.rho : 1.0;
  const double floor = problem.L * (sigma / std::sqrt(static_cast<double>(problem.p())) + 1.0);

  IterateTrace trace;
  IterateRecord first;
  first.k = 0;
  first.f_val = problem.f(x0);
  if (options.store_iterates) first.x = x0;
  if (errors.enabled) {
    first.f_actual = first.f_val;
    if (options.store_iterates) first.x_actual = x0;
  }
  trace.records.push_back(first);
  // an infeasible start (g = +inf, h finite) is allowed; the first sweep lands in dom g
  if (first.f_val == std::numeric_limits<double>::infinity() && std::isfinite(problem.h_eval(x0))) {
    trace.log.push_back("initial point lies outside dom g");
  } else if (!std::isfinite(first.f_val)) {
    trace.status = StopStatus::Diverged;
    throw DivergenceError("run: non-finite objective at the initial point", trace);
  }

  // states[k] is the state that sweep k starts from; scales[k] its s-error scale
  std::vector<AfbState> states{AfbState::at(x0)};
  std::vector<double> scales;
  std::vector<std::vector<HERecord>> he;
  const bool backtrack = errors.enabled && errors.enforce && !errors.is_prescribed();

  std::size_t k = 0;
  trace.status = StopStatus::MaxIter;
  while (true) {
    const IterateRecord& last = trace.records.back();
    if (k > 0 && last.step_norm && last.slope_norm && *last.step_norm <= stop.step_tol &&
        *last.slope_norm <= stop.slope_tol) {
      trace.status = StopStatus::Converged;
      break;
    }
    if (k >= stop.max_iter) break;

    if (scales.size() <= k) scales.resize(k + 1, 1.0);
    const BlockMetricFn fn = [&metrics, k](std::size_t i, const AfbState& s) { return metrics.provider(i, k, s); };

    StepResult res = sweep(problem, states[k], fn, errors, k, scales[k], options.inner, options.store_iterates);
    if (backtrack && !res.he_ok) {
      for (double shrink : {0.25, 0.0}) {
        scales[k] *= shrink;
        res = sweep(problem, states[k], fn, errors, k, scales[k], options.inner, options.store_iterates);
        if (res.he_ok) break;
      }
      if (!res.he_ok && k > 0) {
        // s_i^k from the previous sweep is incompatible: redo that sweep without s-errors
        trace.log.push_back("k=" + std::to_string(k) + ": error conditions unmet, redoing sweep " +
                            std::to_string(k - 1) + " without s-errors");
        --k;
        scales[k] = 0.0;
        states.resize(k + 1);
        trace.records.resize(k + 1);
        he.resize(k);
        continue;
      }
    }

    if (!(rho * res.alpha > floor)) {
      if (!options.override_hp) {
        std::ostringstream msg;
        msg << "metric bound violated at k=" << k << ": rho*alpha_k = " << rho * res.alpha
            << " <= L(sigma/sqrt(p)+1) = " << floor;
        throw ScheduleError(msg.str(), k);
      }
      trace.log.push_back("k=" + std::to_string(k) + ": metric bound overridden");
    }

    trace.records.back().alpha = res.alpha;
    trace.records.back().beta = res.beta;
    for (auto& line : res.log) trace.log.push_back(std::move(line));
    he.resize(k);
    he.push_back(std::move(res.he));
    trace.records.push_back(std::move(res.record));
    states.resize(k + 1);
    states.push_back(std::move(res.next));
    ++k;

    if (!std::isfinite(trace.records.back().f_val)) {
      trace.status = StopStatus::Diverged;
      for (auto& block : he)
        for (auto& h : block) trace.he.push_back(h);
      attach_schedule(trace, problem, errors);
      throw DivergenceError("run: non-finite objective at k=" + std::to_string(k), trace);
    }
    // without backtracking only the latest state is needed
    if (!backtrack) states[k - 1] = AfbState{};
  }

  for (auto& block : he)
    for (auto& h : block) trace.he.push_back(std::move(h));
  attach_schedule(trace, problem, errors);
  return trace;
}

}  // namespace klsplit
