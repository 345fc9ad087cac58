#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>

#include "klsplit/errors.hpp"
#include "klsplit/io.hpp"
#include "klsplit/problems.hpp"

using namespace klsplit;
namespace fs = std::filesystem;

TEST_CASE("power potentials") {
  const BlockProblem g4 = make_power_potential(4.0, 2, 2.0);
  CHECK(g4.L == doctest::Approx(4.0 * 3.0 * 4.0));
  const BlockVector x{(Vector(2) << 1.0, 1.0).finished()};
  CHECK(g4.f(x) == doctest::Approx(4.0));
  // q |x|^{q-2} x = 4 * 2 * (1, 1)
  CHECK(g4.h_grad_block(0, x).isApprox(Vector::Constant(2, 8.0)));
  CHECK_THROWS_AS(make_power_potential(1.5, 1), ConfigError);

  const BlockProblem p = make_power_potential(1.5, 1, 1.0, PotentialMode::Proximal);
  const Vector y = p.g[0].euclidean_prox(Vector::Constant(1, 2.0), 0.5);
  // optimality: y + t q y^{q-1} = |v|
  CHECK(y[0] + 0.5 * 1.5 * std::sqrt(y[0]) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("proximal point on the absolute value") {
  const AbsProxProblem ap = make_abs_prox_problem(0.3);
  CHECK(ap.expected_termination(1.0) == 4);
  CHECK(ap.expected_termination(-0.6) == 2);
  CHECK_THROWS_AS(make_abs_prox_problem(0.0), DomainError);
}

TEST_CASE("quadratic KKT point") {
  const Matrix Q = (Matrix(2, 2) << 2.0, 0.0, 0.0, 8.0).finished();
  const QuadraticProblem qp = make_quadratic(Q, (Vector(2) << 2.0, 8.0).finished(),
                                             std::make_pair(Matrix((Matrix(1, 2) << 1.0, 1.0).finished()),
                                                            Vector(Vector::Ones(1))));
  CHECK(qp.minimizer[0] == doctest::Approx(0.2));
  CHECK(qp.minimizer[1] == doctest::Approx(0.8));
  CHECK(qp.problem.L == doctest::Approx(8.0));
  const Matrix Bdup = (Matrix(2, 2) << 1.0, 1.0, 2.0, 2.0).finished();
  CHECK_THROWS_AS(make_quadratic(Q, Vector::Ones(2), std::make_pair(Bdup, Vector(Vector::Ones(2)))), ConditioningError);
}

TEST_CASE("planted decomposition instances") {
  const DecompositionInstance a = generate_decomposition(8, 6, 2, 5, 10.0, 42);
  const DecompositionInstance b = generate_decomposition(8, 6, 2, 5, 10.0, 42);
  CHECK(a.A == b.A);
  Eigen::JacobiSVD<Matrix> svd(*a.X_true);
  CHECK(svd.singularValues()[2] < 1e-10 * svd.singularValues()[0]);
  std::size_t nnz = 0;
  const double M = a.X_true->cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < a.Y_true->size(); ++i) {
    const double v = std::abs(a.Y_true->data()[i]);
    if (v == 0.0) continue;
    ++nnz;
    CHECK(v >= 10.0 * M);
    CHECK(v <= 20.0 * M);
  }
  CHECK(nnz == 5);
  CHECK_THROWS_AS(generate_decomposition(3, 3, 4, 1, 10.0, 1), DomainError);
  CHECK_THROWS_AS(generate_decomposition(3, 3, 1, 10, 10.0, 1), DomainError);
}

TEST_CASE("packing is row-major and invertible") {
  const Matrix X = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  const BlockVector Z = pack_pair(X, 2.0 * X);
  CHECK(Z[0][1] == 2.0);
  CHECK(Z[0][3] == 4.0);
  const auto [X2, Y2] = unpack_pair(Z, 2, 3);
  CHECK(X2 == X);
  CHECK(Y2 == 2.0 * X);
  CHECK_THROWS_AS(unpack_pair(Z, 3, 3), ShapeError);
}

TEST_CASE("averaged projections stay feasible and recovery metrics") {
  const DecompositionInstance inst = generate_decomposition(10, 10, 2, 6, 10.0, 5);
  Matrix X = Matrix::Zero(10, 10), Y = Matrix::Zero(10, 10);
  for (int k = 0; k < 5; ++k) std::tie(X, Y) = aapm_step(inst, X, Y, 0.5, 0.5);
  Eigen::JacobiSVD<Matrix> svd(X);
  CHECK(svd.singularValues()[2] < 1e-10 * svd.singularValues()[0]);
  CHECK((Y.array() != 0.0).count() <= 6);
  CHECK_THROWS_AS(aapm_step(inst, X, Y, 0.0, 0.5), DomainError);

  const RecoveryMetrics exact = recovery_report(inst, *inst.X_true, *inst.Y_true);
  CHECK(exact.applicable);
  CHECK(exact.rel_error_X == 0.0);
  CHECK(exact.support_agreement == 1.0);
  DecompositionInstance bare = inst;
  bare.X_true.reset();
  bare.Y_true.reset();
  CHECK_FALSE(recovery_report(bare, X, Y).applicable);
}

TEST_CASE("zero rank and zero sparsity give the zero pair") {
  const DecompositionInstance inst = generate_decomposition(4, 4, 0, 0, 10.0, 1);
  CHECK(inst.A.norm() == 0.0);
  const auto [X, Y] = aapm_step(inst, Matrix::Ones(4, 4), Matrix::Ones(4, 4), 1.0, 1.0);
  CHECK(X.norm() == 0.0);
  CHECK(Y.norm() == 0.0);
}

TEST_CASE("trace CSV round trip is exact") {
  IterateTrace t;
  for (std::size_t k = 0; k < 4; ++k) {
    IterateRecord r;
    r.k = k;
    r.f_val = 1.0 / 3.0 + static_cast<double>(k);
    if (k) r.step_norm = std::sqrt(2.0) / static_cast<double>(k);
    r.slope_norm = 0.1 * static_cast<double>(k);
    r.a = 0.5;
    if (k) r.b = 1.0 / 12.0;
    r.region_flag = k % 2 == 0;
    t.records.push_back(r);
  }
  std::stringstream ss;
  write_trace_csv(ss, t);
  const IterateTrace back = read_trace_csv(ss);
  REQUIRE(back.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(back.records[k].f_val == t.records[k].f_val);
    CHECK(back.records[k].step_norm == t.records[k].step_norm);
    CHECK(back.records[k].b == t.records[k].b);
    CHECK(back.records[k].region_flag == t.records[k].region_flag);
  }
}

TEST_CASE("malformed traces are rejected") {
  auto parse = [](const std::string& body) {
    std::stringstream ss("k,f_val,step_norm,slope_norm,a_k,b_k,eps_k,alpha_k,beta_k,region_flag\n" + body);
    return read_trace_csv(ss);
  };
  CHECK_NOTHROW(parse("0,1,,,,,,,,\n1,0.5,0.1,,,,,,,1\n"));
  CHECK_THROWS_AS(parse("0,1,,,,,,,\n"), SchemaError);
  CHECK_THROWS_AS(parse("0,abc,,,,,,,,\n"), SchemaError);
  CHECK_THROWS_AS(parse("1,1,,,,,,,,\n0,1,,,,,,,,\n"), SchemaError);
  CHECK_THROWS_AS(parse("0,1,,,,,,,,2\n"), SchemaError);
  CHECK_THROWS_AS(parse("0,1,,,,,,,,\n1,inf,,,,,,,,\n"), SchemaError);
  std::stringstream bad("k,f\n0,1\n");
  CHECK_THROWS_AS(read_trace_csv(bad), SchemaError);
}

TEST_CASE("instance files") {
  const fs::path dir = fs::temp_directory_path() / "klsplit_problems_test";
  fs::create_directories(dir);
  const DecompositionInstance inst = generate_decomposition(4, 3, 1, 2, 10.0, 9);
  write_instance(dir / "inst.csv", inst);
  const DecompositionInstance back = read_instance(dir / "inst.csv");
  CHECK(back.A == inst.A);
  CHECK(*back.Y_true == *inst.Y_true);
  CHECK(back.r == 1);
  CHECK(back.s == 2);

  std::ofstream(dir / "bad.csv") << "4,3,1,2,9\n1,2\n";
  CHECK_THROWS_AS(read_instance(dir / "bad.csv"), DataError);
  CHECK_THROWS_AS(read_instance(dir / "missing.csv"), DataError);
}
