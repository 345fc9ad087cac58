#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "klsplit/errors.hpp"
#include "klsplit/lm_newton.hpp"
#include "klsplit/problems.hpp"

using namespace klsplit;

TEST_CASE("finite-difference Hessian matches the analytic one") {
  // h = x^4/4 + x y + y^2: H = [[3x^2, 1], [1, 2]]
  auto grad = [](const Vector& v) -> Vector {
    return (Vector(2) << v[0] * v[0] * v[0] + v[1], v[0] + 2.0 * v[1]).finished();
  };
  const Vector x = (Vector(2) << 1.5, -0.5).finished();
  const Matrix H = generalized_hessian_sample(grad, x, HessianMode::finite_difference());
  const Matrix exact = (Matrix(2, 2) << 6.75, 1.0, 1.0, 2.0).finished();
  CHECK((H - exact).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((H - H.transpose()).norm() == 0.0);
  CHECK(generalized_hessian_sample(grad, x, HessianMode::analytic([&](const Vector&) { return exact; })) == exact);
  CHECK_THROWS_AS(generalized_hessian_sample(grad, Vector::Constant(2, 1e300), HessianMode::finite_difference(1.0)),
                  ParameterError);
}

TEST_CASE("regularized metric from an indefinite Hessian") {
  const Matrix H = (Matrix(2, 2) << 1.0, 0.0, 0.0, -3.0).finished();
  const SpdOperator A = lm_metric(H, 0.1);
  CHECK(A.alpha() == doctest::Approx(0.1));
  CHECK(A.beta() == doctest::Approx(1.1));
}

TEST_CASE("step-size schedule check") {
  std::vector<double> ok(100, 0.05);
  CHECK(lm_schedule_check(ok, 0.1, 1.0, 100).passed());
  std::vector<double> big(100, 0.2);
  CHECK(lm_schedule_check(big, 0.1, 1.0, 100).verdict == Verdict::Fail);
  std::vector<double> jump = ok;
  jump[50] = 1e-6;
  CHECK(lm_schedule_check(jump, 0.1, 1.0, 100).verdict == Verdict::Fail);
}

TEST_CASE("projected Newton step onto a line") {
  const SpdOperator A = SpdOperator::from_matrix((Matrix(2, 2) << 2.0, 0.0, 0.0, 8.0).finished());
  const Matrix B = (Matrix(1, 2) << 1.0, 1.0).finished();
  const MetricProjector proj = projector_from(ProxOracle::affine(B, Vector::Ones(1)));
  const Vector grad = (Vector(2) << -2.0, -8.0).finished();
  const Vector y = projected_newton_step(Vector::Zero(2), grad, A, 1.0, proj);
  CHECK(y[0] == doctest::Approx(0.2));
  CHECK(y[1] == doctest::Approx(0.8));
}

TEST_CASE("damped Newton on the double well") {
  const SmoothProblem dw = make_double_well();
  CHECK(dw.L == doctest::Approx(6.0));
  // lambda < epsilon / L
  const LmConfig cfg = LmConfig::constant(1.0, 0.15);
  const IterateTrace t = run_lm(dw, cfg, StoppingRule{}, Vector::Constant(1, 1.4));
  CHECK(t.status == StopStatus::Converged);
  CHECK((*t.back().x)[0][0] == doctest::Approx(1.0).epsilon(1e-8));
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t.records[k].f_val <= t.records[k - 1].f_val);

  CHECK_THROWS_AS(run_lm(dw, LmConfig::constant(1.0, 0.2), StoppingRule{}, Vector::Constant(1, 1.4)), ScheduleError);
}

TEST_CASE("pure Newton solves a constrained quadratic in one step") {
  const Matrix Q = (Matrix(2, 2) << 2.0, 0.0, 0.0, 8.0).finished();
  const QuadraticProblem qp = make_quadratic(Q, (Vector(2) << 2.0, 8.0).finished(),
                                             std::make_pair(Matrix((Matrix(1, 2) << 1.0, 1.0).finished()),
                                                            Vector(Vector::Ones(1))));
  LmConfig cfg;
  cfg.pure_newton = true;
  cfg.hessian = HessianMode::finite_difference();
  const IterateTrace t = run_lm(qp.smooth, cfg, StoppingRule::max_iterations(1), Vector::Zero(2));
  CHECK(((*t.records[1].x)[0] - qp.minimizer).norm() < 1e-8);
}
