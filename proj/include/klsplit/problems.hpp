#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>

#include "json.hpp"
#include "klsplit/afb_engine.hpp"
#include "klsplit/block_vector.hpp"
#include "klsplit/kl_core.hpp"
#include "klsplit/lm_newton.hpp"

namespace klsplit {

enum class PotentialMode { Gradient, Proximal };

/// f(x) = |x|^q on R^dim.
///
/// Gradient mode puts f in h with L = q (q - 1) R^{q-2}, the gradient
/// Lipschitz constant on the ball of radius R (q >= 2 only). Proximal mode puts
/// f in g with a radial prox and h = 0.
BlockProblem make_power_potential(double q, Eigen::Index dim, double radius = 1.0,
                                  PotentialMode mode = PotentialMode::Gradient);

/// Proximal point on f = |x|: h = 0, g = |.|, metric (1/lambda) I.
struct AbsProxProblem {
  BlockProblem problem;
  MetricSchedule metrics;
  double lambda = 1.0;

  /// ceil(|x0| / lambda): iterations until the iterate hits 0.
  std::size_t expected_termination(double x0) const;
};

AbsProxProblem make_abs_prox_problem(double lambda);

/// h(x) = 1/2 x'Qx - b'x over the affine set {Bx = c} (or the whole space).
struct QuadraticProblem {
  BlockProblem problem;
  SmoothProblem smooth;
  Matrix Q;
  Vector b;
  std::optional<std::pair<Matrix, Vector>> constraint;
  Vector minimizer;  // KKT solution
};

/// ConditioningError when the KKT system is singular.
QuadraticProblem make_quadratic(const Matrix& Q, const Vector& b,
                                std::optional<std::pair<Matrix, Vector>> constraint = std::nullopt);

/// h(x) = (x^2 - 1)^2 / 4 on R with L = 3 R^2 - 1, the bound on |h''| over [-R, R].
/// Critical points -1, 0, 1.
SmoothProblem make_double_well(double radius = 1.5275252316519468);

struct DecompositionInstance {
  Matrix A;
  Eigen::Index r = 0;
  std::size_t s = 0;
  std::optional<Matrix> X_true;
  std::optional<Matrix> Y_true;
  std::uint64_t seed = 0;

  Eigen::Index rows() const noexcept { return A.rows(); }
  Eigen::Index cols() const noexcept { return A.cols(); }
};

/// Planted A = X_true + Y_true: X_true a product of Gaussian factors, Y_true with
/// s entries of magnitude in [gap M, 2 gap M] (M = max |X_true|) on a support
/// drawn without replacement.
DecompositionInstance generate_decomposition(Eigen::Index m, Eigen::Index n, Eigen::Index r, std::size_t s,
                                             double magnitude_gap, std::uint64_t seed);

/// X' = proj_rank(lambda (A - Y) + (1 - lambda) X), Y' = proj_l0(mu (A - X') + (1 - mu) Y).
std::pair<Matrix, Matrix> aapm_step(const DecompositionInstance& inst, const Matrix& X, const Matrix& Y,
                                    double lambda, double mu);

/// The same method as a two-block problem: h = 1/2 |A - X - Y|_F^2, L = 1,
/// g_1 = indicator of rank <= r, g_2 = indicator of |.|_0 <= s, blocks stored row-major.
BlockProblem make_decomposition_problem(const DecompositionInstance& inst);

BlockVector pack_pair(const Matrix& X, const Matrix& Y);
std::pair<Matrix, Matrix> unpack_pair(const BlockVector& Z, Eigen::Index m, Eigen::Index n);

struct RecoveryMetrics {
  bool applicable = false;
  double rel_error_X = 0.0;
  double rel_error_Y = 0.0;
  double support_agreement = 0.0;  // Jaccard index of the supports of Y and Y_true
  double residual = 0.0;           // |A - X - Y|_F
};

void to_json(nlohmann::json& j, const RecoveryMetrics& m);

/// Relative errors fall back to absolute ones when the planted factor is zero.
RecoveryMetrics recovery_report(const DecompositionInstance& inst, const Matrix& X, const Matrix& Y);

}  // namespace klsplit
