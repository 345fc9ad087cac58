#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "json.hpp"
#include "klsplit/block_vector.hpp"
#include "klsplit/report.hpp"

namespace klsplit {

struct SpectralBounds {
  double alpha = 0.0;  // least eigenvalue
  double beta = 0.0;   // greatest eigenvalue
};

/// Least and greatest eigenvalue of a symmetric matrix (ShapeError if asymmetric).
SpectralBounds spectral_bounds(const Matrix& M);

/// Symmetric positive-definite operator inducing <x,y>_A = <Ax,y>.
///
/// Scaled identities and diagonals are kept in compact form; dense operators
/// cache a Cholesky factor. Immutable after construction and cheap to copy.
class SpdOperator {
 public:
  static SpdOperator from_matrix(const Matrix& M);
  static SpdOperator scaled_identity(Eigen::Index n, double scale);
  static SpdOperator diagonal(const Vector& d);

  Eigen::Index dim() const noexcept { return n_; }
  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  bool is_scaled_identity() const noexcept { return form_ == Form::ScaledIdentity; }
  /// True for diagonal and scaled-identity forms.
  bool is_diagonal() const noexcept { return form_ != Form::Dense; }
  /// Diagonal entries (valid when is_diagonal()).
  Vector diagonal_entries() const;
  double identity_scale() const noexcept { return scale_; }

  Matrix dense() const;
  Vector apply(const Vector& x) const;
  Vector solve(const Vector& x) const;
  double inner(const Vector& x, const Vector& y) const { return apply(x).dot(y); }
  double norm_sq(const Vector& x) const { return inner(x, x); }

  /// s * A for s > 0.
  SpdOperator scaled(double s) const;

 private:
  enum class Form { ScaledIdentity, Diagonal, Dense };

  Form form_ = Form::ScaledIdentity;
  Eigen::Index n_ = 0;
  double scale_ = 1.0;
  Vector diag_;
  Matrix dense_;
  std::shared_ptr<const Eigen::LLT<Matrix>> llt_;
  double alpha_ = 1.0;
  double beta_ = 1.0;
};

/// Nonsmooth term g with a prox oracle in an arbitrary metric.
///
/// Closed forms are used whenever the metric allows one; otherwise
/// prox_in_metric falls back to a proximal-gradient inner solver that only
/// needs the Euclidean prox of g.
class ProxOracle {
 public:
  enum class Form { Zero, L1, Counting, Box, L0Ball, Rank, Affine, Custom };

  using ValueFn = std::function<double(const Vector&)>;
  /// argmin_y g(y) + |y - v|^2 / (2 t)
  using EuclideanProxFn = std::function<Vector(const Vector&, double)>;

  static ProxOracle zero();
  static ProxOracle l1(double weight = 1.0);
  /// weight * #{i : x_i != 0}
  static ProxOracle counting(double weight = 1.0);
  static ProxOracle box(Vector lo, Vector hi);
  static ProxOracle box(double lo, double hi);
  static ProxOracle l0_ball(std::size_t s);
  /// Indicator of {rank <= r} for a rows x cols matrix stored row-major.
  static ProxOracle rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index r);
  static ProxOracle affine(Matrix B, Vector c);
  static ProxOracle custom(std::string id, ValueFn value, EuclideanProxFn prox);

  Form form() const noexcept { return form_; }
  const std::string& id() const noexcept { return id_; }

  /// g(x); indicators return +inf off their set.
  double value(const Vector& x) const;
  bool has_closed_form(const SpdOperator& A) const;
  Vector euclidean_prox(const Vector& v, double t) const;
  /// Closed-form prox in metric A; requires has_closed_form(A).
  Vector closed_form_prox(const SpdOperator& A, const Vector& x) const;

  std::size_t sparsity() const noexcept { return s_; }
  Eigen::Index rank_bound() const noexcept { return r_; }
  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }

 private:
  Form form_ = Form::Zero;
  std::string id_ = "zero";
  double weight_ = 1.0;
  Vector lo_, hi_;
  double lo_scalar_ = 0.0, hi_scalar_ = 0.0;
  bool scalar_box_ = false;
  std::size_t s_ = 0;
  Eigen::Index rows_ = 0, cols_ = 0, r_ = 0;
  Matrix B_;
  Vector c_;
  ValueFn value_fn_;
  EuclideanProxFn prox_fn_;
};

struct InnerSolverOptions {
  int max_iterations = 10000;
  double step_tolerance = 1e-12;
};

/// One element of argmin_y { g(y) + 1/2 |y - x|_A^2 }.
Vector prox_in_metric(const ProxOracle& g, const SpdOperator& A, const Vector& x,
                      const InnerSolverOptions& opts = {});

struct TruncatedSvd {
  Matrix U;
  Vector S;
  Matrix V;
};

/// Leading r singular triplets in descending order; each left singular vector
/// has its first nonzero component positive.
TruncatedSvd truncated_svd(const Matrix& X, Eigen::Index r);

/// Frobenius-nearest matrix of rank <= r.
Matrix project_rank(const Matrix& X, Eigen::Index r);

/// Keeps the s entries of largest magnitude; ties go to the smaller row-major index.
Matrix project_l0(const Matrix& X, std::size_t s);
Vector project_l0(const Vector& x, std::size_t s);

/// Frobenius-nearest positive-semidefinite matrix (negative eigenvalues clamped).
Matrix project_psd(const Matrix& H);

/// argmin |y - x|_A^2 subject to B y = c.
Vector project_affine_in_metric(const Matrix& B, const Vector& c, const SpdOperator& A,
                                const Vector& x);

struct HPReport {
  Verdict hp1 = Verdict::Pass;
  double min_alpha = 0.0;
  std::size_t min_alpha_index = 0;
  double L = 0.0;

  Verdict hp2 = Verdict::Pass;
  SummabilityFit inverse_beta;

  Verdict hp3 = Verdict::Pass;
  double max_ratio = 0.0;
  std::size_t max_ratio_index = 0;
  double hp3_threshold = 0.0;

  std::vector<double> condition_numbers;

  bool hard_pass() const noexcept { return hp1 == Verdict::Pass && hp3 == Verdict::Pass && hp2 != Verdict::Fail; }
};

void to_json(nlohmann::json& j, const HPReport& r);

/// Checks the metric-schedule hypotheses on the first `horizon` terms:
/// min alpha_k > L, (1/beta_k) not summable (heuristic), sup beta_k/alpha_{k+1}
/// below `hp3_threshold`.
HPReport hp_check(std::span<const double> alphas, std::span<const double> betas, double L,
                  std::size_t horizon, double hp3_threshold = 1e3);

}  // namespace klsplit
