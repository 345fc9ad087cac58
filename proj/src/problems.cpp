#include "klsplit/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/LU>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

// argmin_y |y|^q + |y - v|^2 / (2t): y = rho v/|v| with rho + t q rho^{q-1} = |v|.
Vector radial_power_prox(const Vector& v, double t, double q) {
  const double nv = v.norm();
  if (nv == 0.0) return v;
  double lo = 0.0, hi = nv;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * nv; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid + t * q * std::pow(mid, q - 1.0) > nv) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return (0.5 * (lo + hi) / nv) * v;
}

Vector row_major_flat(const Matrix& M) {
  RowMajorMatrix R = M;
  return Eigen::Map<const Vector>(R.data(), R.size());
}

Matrix from_row_major(const Vector& v, Eigen::Index m, Eigen::Index n) {
  return Eigen::Map<const RowMajorMatrix>(v.data(), m, n);
}

}  // namespace

BlockProblem make_power_potential(double q, Eigen::Index dim, double radius, PotentialMode mode) {
  if (!(q > 1.0)) throw DomainError("make_power_potential: q must exceed 1");
  if (dim <= 0) throw ShapeError("make_power_potential: dimension must be positive");
  if (!(radius > 0.0)) throw DomainError("make_power_potential: radius must be positive");

  BlockProblem P;
  P.dims = {dim};
  auto f = [q](const Vector& x) { return std::pow(x.norm(), q); };
  if (mode == PotentialMode::Gradient) {
    if (q < 2.0) throw ConfigError("make_power_potential: q < 2 has no Lipschitz gradient; use proximal mode");
    P.h_eval = [f](const BlockVector& X) { return f(X[0]); };
    P.h_grad_block = [q](std::size_t, const BlockVector& X) -> Vector {
      const double nx = X[0].norm();
      if (nx == 0.0) return Vector::Zero(X[0].size());
      return q * std::pow(nx, q - 2.0) * X[0];
    };
    P.L = q * (q - 1.0) * std::pow(radius, q - 2.0);
    P.g = {ProxOracle::zero()};
  } else {
    P.h_eval = [](const BlockVector&) { return 0.0; };
    P.h_grad_block = [dim](std::size_t, const BlockVector&) -> Vector { return Vector::Zero(dim); };
    P.L = 0.0;
    P.g = {ProxOracle::custom(
        "power_potential", f, [q](const Vector& v, double t) { return radial_power_prox(v, t, q); })};
  }
  return P;
}

std::size_t AbsProxProblem::expected_termination(double x0) const {
  return static_cast<std::size_t>(std::ceil(std::abs(x0) / lambda));
}

AbsProxProblem make_abs_prox_problem(double lambda) {
  if (!(lambda > 0.0)) throw DomainError("make_abs_prox_problem: lambda must be positive");
  AbsProxProblem out;
  out.lambda = lambda;
  out.problem.dims = {1};
  out.problem.h_eval = [](const BlockVector&) { return 0.0; };
  out.problem.h_grad_block = [](std::size_t, const BlockVector&) -> Vector { return Vector::Zero(1); };
  out.problem.L = 0.0;
  out.problem.g = {ProxOracle::l1(1.0)};
  out.metrics = MetricSchedule::constant({1}, 1.0 / lambda);
  return out;
}

QuadraticProblem make_quadratic(const Matrix& Q, const Vector& b,
                                std::optional<std::pair<Matrix, Vector>> constraint) {
  const SpectralBounds sb = spectral_bounds(Q);
  if (!(sb.alpha > 0.0)) throw DomainError("make_quadratic: Q must be positive definite");
  const Eigen::Index n = Q.rows();
  if (b.size() != n) throw ShapeError("make_quadratic: b has the wrong size");

  QuadraticProblem out;
  out.Q = Q;
  out.b = b;
  out.constraint = constraint;

  Eigen::Index mc = 0;
  if (constraint) {
    mc = constraint->first.rows();
    if (constraint->first.cols() != n || constraint->second.size() != mc)
      throw ShapeError("make_quadratic: constraint has the wrong shape");
  }
  Matrix K = Matrix::Zero(n + mc, n + mc);
  Vector rhs(n + mc);
  K.topLeftCorner(n, n) = Q;
  rhs.head(n) = b;
  if (constraint) {
    K.topRightCorner(n, mc) = constraint->first.transpose();
    K.bottomLeftCorner(mc, n) = constraint->first;
    rhs.tail(mc) = constraint->second;
  }
  Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible()) throw ConditioningError("make_quadratic: KKT system is singular");
  out.minimizer = lu.solve(rhs).head(n);

  auto h = [Q, b](const Vector& x) { return 0.5 * x.dot(Q * x) - b.dot(x); };
  auto grad = [Q, b](const Vector& x) -> Vector { return Q * x - b; };
  const ProxOracle g = constraint ? ProxOracle::affine(constraint->first, constraint->second) : ProxOracle::zero();

  out.problem.dims = {n};
  out.problem.h_eval = [h](const BlockVector& X) { return h(X[0]); };
  out.problem.h_grad_block = [grad](std::size_t, const BlockVector& X) { return grad(X[0]); };
  out.problem.L = sb.beta;
  out.problem.g = {g};

  out.smooth.dim = n;
  out.smooth.h = h;
  out.smooth.grad = grad;
  out.smooth.L = sb.beta;
  out.smooth.constraint = g;
  return out;
}

SmoothProblem make_double_well(double radius) {
  if (!(radius >= 1.0)) throw DomainError("make_double_well: radius must be at least 1");
  SmoothProblem P;
  P.dim = 1;
  P.h = [](const Vector& x) { return 0.25 * (x[0] * x[0] - 1.0) * (x[0] * x[0] - 1.0); };
  P.grad = [](const Vector& x) -> Vector { return Vector::Constant(1, x[0] * x[0] * x[0] - x[0]); };
  P.L = 3.0 * radius * radius - 1.0;
  return P;
}

DecompositionInstance generate_decomposition(Eigen::Index m, Eigen::Index n, Eigen::Index r, std::size_t s,
                                             double magnitude_gap, std::uint64_t seed) {
  if (m <= 0 || n <= 0) throw DomainError("generate_decomposition: matrix shape must be positive");
  if (r < 0 || r > std::min(m, n)) throw DomainError("generate_decomposition: rank bound out of range");
  if (s > static_cast<std::size_t>(m * n)) throw DomainError("generate_decomposition: sparsity exceeds m*n");
  if (!(magnitude_gap > 0.0)) throw DomainError("generate_decomposition: magnitude gap must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Matrix U(m, r), V(r, n);
  for (Eigen::Index i = 0; i < U.size(); ++i) U.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = normal(rng);
  const Matrix X = r > 0 ? Matrix(U * V) : Matrix::Zero(m, n);

  const double scale = r > 0 ? X.cwiseAbs().maxCoeff() : 1.0;
  std::vector<std::size_t> cells(static_cast<std::size_t>(m * n));
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  std::shuffle(cells.begin(), cells.end(), rng);
  Matrix Y = Matrix::Zero(m, n);
  for (std::size_t j = 0; j < s; ++j) {
    const auto c = static_cast<Eigen::Index>(cells[j]);
    const double mag = magnitude_gap * scale * (1.0 + unif(rng));
    const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
    Y(c / n, c % n) = sign * mag;
  }

  DecompositionInstance inst;
  inst.A = X + Y;
  inst.r = r;
  inst.s = s;
  inst.X_true = X;
  inst.Y_true = Y;
  inst.seed = seed;
  return inst;
}

std::pair<Matrix, Matrix> aapm_step(const DecompositionInstance& inst, const Matrix& X, const Matrix& Y,
                                    double lambda, double mu) {
  if (!(lambda > 0.0 && lambda <= 1.0) || !(mu > 0.0 && mu <= 1.0))
    throw DomainError("aapm_step: averaging weights must lie in (0,1]");
  if (X.rows() != inst.rows() || X.cols() != inst.cols() || Y.rows() != inst.rows() || Y.cols() != inst.cols())
    throw ShapeError("aapm_step: iterate shape does not match the instance");
  // same arithmetic as a gradient step on 1/2 |A - X - Y|^2, so the block engine reproduces it bit for bit
  Matrix Xn = project_rank(Matrix(X - lambda * ((X + Y) - inst.A)), inst.r);
  Matrix Yn = project_l0(Matrix(Y - mu * ((Xn + Y) - inst.A)), inst.s);
  return {std::move(Xn), std::move(Yn)};
}

BlockVector pack_pair(const Matrix& X, const Matrix& Y) { return BlockVector{row_major_flat(X), row_major_flat(Y)}; }

std::pair<Matrix, Matrix> unpack_pair(const BlockVector& Z, Eigen::Index m, Eigen::Index n) {
  if (Z.size() != 2 || Z[0].size() != m * n || Z[1].size() != m * n)
    throw ShapeError("unpack_pair: block sizes do not match the matrix shape");
  return {from_row_major(Z[0], m, n), from_row_major(Z[1], m, n)};
}

BlockProblem make_decomposition_problem(const DecompositionInstance& inst) {
  const Eigen::Index m = inst.rows();
  const Eigen::Index n = inst.cols();
  const Vector a = row_major_flat(inst.A);
  BlockProblem P;
  P.dims = {m * n, m * n};
  P.h_eval = [a](const BlockVector& Z) { return 0.5 * (a - Z[0] - Z[1]).squaredNorm(); };
  P.h_grad_block = [a](std::size_t, const BlockVector& Z) -> Vector { return Z[0] + Z[1] - a; };
  P.L = 1.0;
  P.g = {ProxOracle::rank(m, n, inst.r), ProxOracle::l0_ball(inst.s)};
  return P;
}

void to_json(nlohmann::json& j, const RecoveryMetrics& m) {
  if (!m.applicable) {
    j = nlohmann::json{{"status", "not_applicable"}, {"residual", m.residual}};
    return;
  }
  j = nlohmann::json{{"status", "ok"},
                     {"rel_error_X", m.rel_error_X},
                     {"rel_error_Y", m.rel_error_Y},
                     {"support_agreement", m.support_agreement},
                     {"residual", m.residual}};
}

RecoveryMetrics recovery_report(const DecompositionInstance& inst, const Matrix& X, const Matrix& Y) {
  RecoveryMetrics out;
  if (X.rows() != inst.rows() || X.cols() != inst.cols() || Y.rows() != inst.rows() || Y.cols() != inst.cols())
    throw ShapeError("recovery_report: shape mismatch");
  out.residual = (inst.A - X - Y).norm();
  if (!inst.X_true || !inst.Y_true) return out;
  out.applicable = true;
  auto rel = [](const Matrix& est, const Matrix& truth) {
    const double nt = truth.norm();
    const double e = (est - truth).norm();
    return nt > 0.0 ? e / nt : e;
  };
  out.rel_error_X = rel(X, *inst.X_true);
  out.rel_error_Y = rel(Y, *inst.Y_true);
  std::size_t both = 0, either = 0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    const bool a = Y.data()[i] != 0.0;
    const bool b = inst.Y_true->data()[i] != 0.0;
    both += (a && b);
    either += (a || b);
  }
  out.support_agreement = either ? static_cast<double>(both) / static_cast<double>(either) : 1.0;
  return out;
}

}  // namespace klsplit
