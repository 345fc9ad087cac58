#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "klsplit/errors.hpp"
#include "klsplit/metric_ops.hpp"

using namespace klsplit;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index m, Eigen::Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Matrix M(m, n);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = N(rng);
  return M;
}

}  // namespace

TEST_CASE("spectral bounds") {
  Matrix M(2, 2);
  M << 2.0, 1.0, 1.0, 2.0;
  const SpectralBounds sb = spectral_bounds(M);
  CHECK(sb.alpha == doctest::Approx(1.0));
  CHECK(sb.beta == doctest::Approx(3.0));
  M(0, 1) = 1.5;
  CHECK_THROWS_AS(spectral_bounds(M), ShapeError);
  CHECK_THROWS_AS(spectral_bounds(Matrix(2, 3)), ShapeError);
}

TEST_CASE("operator forms agree") {
  std::mt19937_64 rng(3);
  const Vector d = (Vector(3) << 1.0, 2.0, 4.0).finished();
  const SpdOperator diag = SpdOperator::diagonal(d);
  const SpdOperator dense = SpdOperator::from_matrix(d.asDiagonal().toDenseMatrix());
  const Vector x = random_matrix(rng, 3, 1);
  CHECK((diag.apply(x) - dense.apply(x)).norm() < 1e-14);
  CHECK((diag.solve(x) - dense.solve(x)).norm() < 1e-14);
  CHECK(diag.alpha() == 1.0);
  CHECK(diag.beta() == 4.0);
  CHECK(dense.beta() == doctest::Approx(4.0));
  CHECK(SpdOperator::scaled_identity(3, 2.0).scaled(0.5).identity_scale() == 1.0);
  CHECK_THROWS_AS(SpdOperator::diagonal(-d), DomainError);
  CHECK_THROWS_AS(SpdOperator::from_matrix(-Matrix::Identity(2, 2)), DomainError);
  CHECK_THROWS_AS(dense.diagonal_entries(), ShapeError);
}

TEST_CASE("weighted soft threshold in a diagonal metric") {
  const SpdOperator A = SpdOperator::diagonal((Vector(3) << 1.0, 2.0, 4.0).finished());
  const Vector x = (Vector(3) << 3.0, -0.2, 0.5).finished();
  const Vector y = prox_in_metric(ProxOracle::l1(1.0), A, x);
  // y_i = sign(x_i) max(|x_i| - 1/a_i, 0)
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(0.25));
}

TEST_CASE("inner solver matches closed forms in a dense metric") {
  const Vector d = (Vector(3) << 1.0, 2.0, 4.0).finished();
  const SpdOperator diag = SpdOperator::diagonal(d);
  const SpdOperator dense = SpdOperator::from_matrix(d.asDiagonal().toDenseMatrix());
  const Vector x = (Vector(3) << 3.0, -0.2, 0.5).finished();
  for (const ProxOracle& g : {ProxOracle::l1(1.0), ProxOracle::box(-1.0, 0.3)}) {
    CHECK_FALSE(g.has_closed_form(dense));
    const Vector closed = prox_in_metric(g, diag, x);
    const Vector inner = prox_in_metric(g, dense, x);
    CHECK((closed - inner).norm() < 1e-9);
  }
}

TEST_CASE("counting prox keeps entries above the metric threshold") {
  const SpdOperator A = SpdOperator::scaled_identity(3, 2.0);
  const Vector x = (Vector(3) << 1.0, 1.5, -0.9).finished();
  // keep x_i iff a x_i^2 / 2 > w, here x_i^2 > 1
  const Vector y = prox_in_metric(ProxOracle::counting(1.0), A, x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 1.5);
  CHECK(y[2] == 0.0);
  CHECK(ProxOracle::counting(1.0).value(y) == 1.0);
}

TEST_CASE("rank and sparsity projections") {
  std::mt19937_64 rng(9);
  const Matrix X = random_matrix(rng, 5, 4);
  const Matrix P = project_rank(X, 2);
  Eigen::JacobiSVD<Matrix> svd(X);
  const Vector s = svd.singularValues();
  // Eckart-Young: error equals the norm of the discarded singular values
  CHECK((X - P).norm() == doctest::Approx(s.tail(2).norm()).epsilon(1e-12));
  CHECK(project_rank(X, 0).norm() == 0.0);

  const TruncatedSvd t = truncated_svd(X, 2);
  CHECK(t.S[0] >= t.S[1]);
  for (Eigen::Index j = 0; j < 2; ++j) {
    Eigen::Index i = 0;
    while (t.U(i, j) == 0.0) ++i;
    CHECK(t.U(i, j) > 0.0);
  }

  Matrix T(2, 2);
  T << 1.0, -1.0, 1.0, 0.5;
  const Matrix L = project_l0(T, 2);
  // ties on |1| go to the smaller row-major index
  CHECK(L(0, 0) == 1.0);
  CHECK(L(0, 1) == -1.0);
  CHECK(L(1, 0) == 0.0);
  CHECK(project_l0(Vector(Vector::Ones(3)), 5).sum() == 3.0);
}

TEST_CASE("positive semidefinite projection") {
  Matrix H(2, 2);
  H << 1.0, 0.0, 0.0, -2.0;
  const Matrix P = project_psd(H);
  CHECK(P(0, 0) == doctest::Approx(1.0));
  CHECK(P(1, 1) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("affine projection in a metric") {
  const SpdOperator A = SpdOperator::from_matrix((Matrix(2, 2) << 2.0, 0.0, 0.0, 8.0).finished());
  const Matrix B = (Matrix(1, 2) << 1.0, 1.0).finished();
  const Vector c = Vector::Ones(1);
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  const Vector y = project_affine_in_metric(B, c, A, x);
  // minimize 2 (y1-1)^2 + 8 (y2-1)^2 on y1 + y2 = 1: y = (0.2, 0.8)
  CHECK(y[0] == doctest::Approx(0.2));
  CHECK(y[1] == doctest::Approx(0.8));

  const Matrix Bdup = (Matrix(2, 2) << 1.0, 1.0, 2.0, 2.0).finished();
  CHECK_THROWS_AS(project_affine_in_metric(Bdup, Vector::Ones(2), A, x), RankError);
}

TEST_CASE("metric schedule hypotheses") {
  std::vector<double> a(100, 2.0), b(100, 3.0);
  HPReport ok = hp_check(a, b, 1.0, 100);
  CHECK(ok.hard_pass());
  CHECK(ok.max_ratio == doctest::Approx(1.5));

  HPReport low = hp_check(a, b, 2.5, 100);
  CHECK(low.hp1 == Verdict::Fail);
  CHECK_FALSE(low.hard_pass());

  std::vector<double> big = b;
  big[10] = 1e5;
  HPReport jump = hp_check(a, big, 1.0, 100);
  CHECK(jump.hp3 == Verdict::Fail);
  CHECK(jump.max_ratio_index == 10);

  CHECK_THROWS_AS(hp_check(b, a, 1.0, 100), DomainError);
}
