#include "klsplit/metric_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "klsplit/errors.hpp"

namespace klsplit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double abs_row_sum_norm(const Matrix& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().rowwise().sum().maxCoeff();
}

void require_symmetric(const Matrix& M, const char* who) {
  if (M.rows() != M.cols()) throw ShapeError(std::string(who) + ": matrix is not square");
  const double tol = 1e-12 * (1.0 + abs_row_sum_norm(M));
  if (M.size() > 0 && (M - M.transpose()).cwiseAbs().maxCoeff() > tol)
    throw ShapeError(std::string(who) + ": matrix is not symmetric");
}

using RowMajorMap = Eigen::Map<const RowMajorMatrix>;

Matrix as_matrix(const Vector& flat, Eigen::Index rows, Eigen::Index cols) {
  if (flat.size() != rows * cols) throw ShapeError("rank prox: block size does not match matrix shape");
  return RowMajorMap(flat.data(), rows, cols);
}

Vector as_flat(const Matrix& M) {
  RowMajorMatrix rm = M;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

}  // namespace

SpectralBounds spectral_bounds(const Matrix& M) {
  require_symmetric(M, "spectral_bounds");
  if (M.rows() == 0) throw ShapeError("spectral_bounds: empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

// ---------------------------------------------------------------------------
// SpdOperator

SpdOperator SpdOperator::from_matrix(const Matrix& M) {
  const SpectralBounds sb = spectral_bounds(M);
  if (!(sb.alpha > 0.0)) throw DomainError("SpdOperator: matrix is not positive definite");
  SpdOperator A;
  A.form_ = Form::Dense;
  A.n_ = M.rows();
  A.dense_ = 0.5 * (M + M.transpose());
  A.llt_ = std::make_shared<const Eigen::LLT<Matrix>>(A.dense_);
  A.alpha_ = sb.alpha;
  A.beta_ = sb.beta;
  return A;
}

SpdOperator SpdOperator::scaled_identity(Eigen::Index n, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("SpdOperator: identity scale must be positive");
  if (n <= 0) throw ShapeError("SpdOperator: dimension must be positive");
  SpdOperator A;
  A.form_ = Form::ScaledIdentity;
  A.n_ = n;
  A.scale_ = scale;
  A.alpha_ = scale;
  A.beta_ = scale;
  return A;
}

SpdOperator SpdOperator::diagonal(const Vector& d) {
  if (d.size() == 0) throw ShapeError("SpdOperator: empty diagonal");
  if (!(d.minCoeff() > 0.0) || !d.allFinite()) throw DomainError("SpdOperator: diagonal must be positive");
  SpdOperator A;
  A.form_ = Form::Diagonal;
  A.n_ = d.size();
  A.diag_ = d;
  A.alpha_ = d.minCoeff();
  A.beta_ = d.maxCoeff();
  return A;
}

Vector SpdOperator::diagonal_entries() const {
  switch (form_) {
    case Form::ScaledIdentity:
      return Vector::Constant(n_, scale_);
    case Form::Diagonal:
      return diag_;
    case Form::Dense:
      break;
  }
  throw ShapeError("SpdOperator: dense operator has no diagonal form");
}

Matrix SpdOperator::dense() const {
  switch (form_) {
    case Form::ScaledIdentity:
      return scale_ * Matrix::Identity(n_, n_);
    case Form::Diagonal:
      return diag_.asDiagonal();
    case Form::Dense:
      break;
  }
  return dense_;
}

Vector SpdOperator::apply(const Vector& x) const {
  if (x.size() != n_) throw ShapeError("SpdOperator::apply: dimension mismatch");
  switch (form_) {
    case Form::ScaledIdentity:
      return scale_ * x;
    case Form::Diagonal:
      return diag_.cwiseProduct(x);
    case Form::Dense:
      break;
  }
  return dense_ * x;
}

Vector SpdOperator::solve(const Vector& x) const {
  if (x.size() != n_) throw ShapeError("SpdOperator::solve: dimension mismatch");
  switch (form_) {
    case Form::ScaledIdentity:
      return x / scale_;
    case Form::Diagonal:
      return x.cwiseQuotient(diag_);
    case Form::Dense:
      break;
  }
  return llt_->solve(x);
}

SpdOperator SpdOperator::scaled(double s) const {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("SpdOperator::scaled: factor must be positive");
  switch (form_) {
    case Form::ScaledIdentity:
      return scaled_identity(n_, s * scale_);
    case Form::Diagonal:
      return diagonal(s * diag_);
    case Form::Dense:
      break;
  }
  SpdOperator A = *this;
  A.dense_ = s * dense_;
  A.llt_ = std::make_shared<const Eigen::LLT<Matrix>>(A.dense_);
  A.alpha_ = s * alpha_;
  A.beta_ = s * beta_;
  return A;
}

// ---------------------------------------------------------------------------
// ProxOracle

ProxOracle ProxOracle::zero() { return ProxOracle{}; }

ProxOracle ProxOracle::l1(double weight) {
  if (!(weight >= 0.0)) throw DomainError("l1: weight must be nonnegative");
  ProxOracle g;
  g.form_ = Form::L1;
  g.id_ = "l1";
  g.weight_ = weight;
  return g;
}

ProxOracle ProxOracle::counting(double weight) {
  if (!(weight >= 0.0)) throw DomainError("counting: weight must be nonnegative");
  ProxOracle g;
  g.form_ = Form::Counting;
  g.id_ = "counting";
  g.weight_ = weight;
  return g;
}

ProxOracle ProxOracle::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size()) throw ShapeError("box: bound sizes differ");
  if ((lo.array() > hi.array()).any()) throw DomainError("box: lo > hi");
  ProxOracle g;
  g.form_ = Form::Box;
  g.id_ = "indicator_box";
  g.lo_ = std::move(lo);
  g.hi_ = std::move(hi);
  return g;
}

ProxOracle ProxOracle::box(double lo, double hi) {
  if (lo > hi) throw DomainError("box: lo > hi");
  ProxOracle g;
  g.form_ = Form::Box;
  g.id_ = "indicator_box";
  g.scalar_box_ = true;
  g.lo_scalar_ = lo;
  g.hi_scalar_ = hi;
  return g;
}

ProxOracle ProxOracle::l0_ball(std::size_t s) {
  ProxOracle g;
  g.form_ = Form::L0Ball;
  g.id_ = "indicator_l0ball";
  g.s_ = s;
  return g;
}

ProxOracle ProxOracle::rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index r) {
  if (rows <= 0 || cols <= 0) throw ShapeError("rank: matrix shape must be positive");
  if (r < 0) throw DomainError("rank: bound must be nonnegative");
  ProxOracle g;
  g.form_ = Form::Rank;
  g.id_ = "indicator_rank";
  g.rows_ = rows;
  g.cols_ = cols;
  g.r_ = r;
  return g;
}

ProxOracle ProxOracle::affine(Matrix B, Vector c) {
  if (B.rows() != c.size()) throw ShapeError("affine: B and c disagree");
  ProxOracle g;
  g.form_ = Form::Affine;
  g.id_ = "indicator_affine";
  g.B_ = std::move(B);
  g.c_ = std::move(c);
  return g;
}

ProxOracle ProxOracle::custom(std::string id, ValueFn value, EuclideanProxFn prox) {
  if (!value || !prox) throw DomainError("custom prox oracle needs value and prox callables");
  ProxOracle g;
  g.form_ = Form::Custom;
  g.id_ = std::move(id);
  g.value_fn_ = std::move(value);
  g.prox_fn_ = std::move(prox);
  return g;
}

double ProxOracle::value(const Vector& x) const {
  switch (form_) {
    case Form::Zero:
      return 0.0;
    case Form::L1:
      return weight_ * x.lpNorm<1>();
    case Form::Counting:
      return weight_ * static_cast<double>((x.array() != 0.0).count());
    case Form::Box:
      if (scalar_box_) return ((x.array() >= lo_scalar_) && (x.array() <= hi_scalar_)).all() ? 0.0 : kInf;
      if (x.size() != lo_.size()) throw ShapeError("box: dimension mismatch");
      return ((x.array() >= lo_.array()) && (x.array() <= hi_.array())).all() ? 0.0 : kInf;
    case Form::L0Ball:
      return static_cast<std::size_t>((x.array() != 0.0).count()) <= s_ ? 0.0 : kInf;
    case Form::Rank: {
      const Matrix M = as_matrix(x, rows_, cols_);
      const Vector sv = Eigen::JacobiSVD<Matrix>(M).singularValues();
      const double tol = 1e-9 * std::max(1.0, sv.size() ? sv[0] : 0.0);
      return (sv.array() > tol).count() <= r_ ? 0.0 : kInf;
    }
    case Form::Affine: {
      if (x.size() != B_.cols()) throw ShapeError("affine: dimension mismatch");
      const double tol = 1e-9 * (1.0 + c_.norm() + abs_row_sum_norm(B_) * x.norm());
      return (B_ * x - c_).norm() <= tol ? 0.0 : kInf;
    }
    case Form::Custom:
      return value_fn_(x);
  }
  return kInf;
}

bool ProxOracle::has_closed_form(const SpdOperator& A) const {
  switch (form_) {
    case Form::Zero:
    case Form::Affine:
      return true;
    case Form::L1:
    case Form::Counting:
    case Form::Box:
    case Form::L0Ball:
      return A.is_diagonal();
    case Form::Rank:
    case Form::Custom:
      return A.is_scaled_identity();
  }
  return false;
}

Vector ProxOracle::closed_form_prox(const SpdOperator& A, const Vector& x) const {
  if (x.size() != A.dim()) throw ShapeError("prox: metric and point dimensions differ");
  if (!has_closed_form(A)) throw DomainError("prox: no closed form for " + id_ + " in this metric");
  switch (form_) {
    case Form::Zero:
      return x;
    case Form::L1: {
      const Vector a = A.diagonal_entries();
      Vector y(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double shrink = std::max(std::abs(x[i]) - weight_ / a[i], 0.0);
        y[i] = x[i] > 0 ? shrink : (x[i] < 0 ? -shrink : 0.0);
      }
      return y;
    }
    case Form::Counting: {
      // keep x_i only when it is strictly cheaper than zeroing it
      const Vector a = A.diagonal_entries();
      Vector y = x;
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (!(0.5 * a[i] * x[i] * x[i] > weight_)) y[i] = 0.0;
      return y;
    }
    case Form::Box:
      if (scalar_box_) return x.cwiseMax(lo_scalar_).cwiseMin(hi_scalar_);
      if (x.size() != lo_.size()) throw ShapeError("box: dimension mismatch");
      return x.cwiseMax(lo_).cwiseMin(hi_);
    case Form::L0Ball: {
      if (A.is_scaled_identity()) return project_l0(x, s_);
      const Vector a = A.diagonal_entries();
      const Vector weighted = (a.cwiseProduct(x.cwiseAbs2())).cwiseSqrt();
      const Vector mask = project_l0(weighted, s_);
      Vector y = Vector::Zero(x.size());
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (mask[i] != 0.0) y[i] = x[i];
      return y;
    }
    case Form::Rank:
      return as_flat(project_rank(as_matrix(x, rows_, cols_), r_));
    case Form::Affine:
      return project_affine_in_metric(B_, c_, A, x);
    case Form::Custom:
      return prox_fn_(x, 1.0 / A.identity_scale());
  }
  return x;
}

Vector ProxOracle::euclidean_prox(const Vector& v, double t) const {
  if (!(t > 0.0)) throw DomainError("euclidean_prox: step must be positive");
  return closed_form_prox(SpdOperator::scaled_identity(v.size(), 1.0 / t), v);
}

Vector prox_in_metric(const ProxOracle& g, const SpdOperator& A, const Vector& x,
                      const InnerSolverOptions& opts) {
  if (x.size() != A.dim()) throw ShapeError("prox_in_metric: dimension mismatch");
  if (g.has_closed_form(A)) return g.closed_form_prox(A, x);

  // proximal gradient on y -> g(y) + 1/2 |y - x|_A^2 with step 1/beta(A)
  const double t = 1.0 / A.beta();
  Vector y = x;
  double step = kInf;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Vector next = g.euclidean_prox(y - t * A.apply(y - x), t);
    step = (next - y).norm();
    y = std::move(next);
    if (step <= opts.step_tolerance * std::max(1.0, y.norm())) return y;
  }
  throw InnerSolverError("prox_in_metric: inner solver did not converge for " + g.id(), step);
}

// ---------------------------------------------------------------------------
// Projections

TruncatedSvd truncated_svd(const Matrix& X, Eigen::Index r) {
  const Eigen::Index k = std::min(X.rows(), X.cols());
  r = std::clamp<Eigen::Index>(r, 0, k);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out{svd.matrixU().leftCols(r), svd.singularValues().head(r), svd.matrixV().leftCols(r)};
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < out.U.rows(); ++i) {
      if (out.U(i, j) != 0.0) {
        if (out.U(i, j) < 0.0) {
          out.U.col(j) *= -1.0;
          out.V.col(j) *= -1.0;
        }
        break;
      }
    }
  }
  return out;
}

Matrix project_rank(const Matrix& X, Eigen::Index r) {
  if (r < 0) throw DomainError("project_rank: r must be nonnegative");
  if (r >= std::min(X.rows(), X.cols())) return X;
  if (r == 0) return Matrix::Zero(X.rows(), X.cols());
  const TruncatedSvd t = truncated_svd(X, r);
  return t.U * t.S.asDiagonal() * t.V.transpose();
}

Matrix project_l0(const Matrix& X, std::size_t s) {
  const Eigen::Index m = X.rows();
  const Eigen::Index n = X.cols();
  const std::size_t total = static_cast<std::size_t>(m * n);
  if (s >= total) return X;
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto at = [&](std::size_t flat) {
    return std::abs(X(static_cast<Eigen::Index>(flat) / n, static_cast<Eigen::Index>(flat) % n));
  };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return at(a) > at(b); });
  Matrix Y = Matrix::Zero(m, n);
  for (std::size_t j = 0; j < s; ++j) {
    const auto i = static_cast<Eigen::Index>(idx[j]);
    Y(i / n, i % n) = X(i / n, i % n);
  }
  return Y;
}

Vector project_l0(const Vector& x, std::size_t s) {
  const Matrix col = x;
  return project_l0(col, s).col(0);
}

Matrix project_psd(const Matrix& H) {
  require_symmetric(H, "project_psd");
  const Matrix S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S);
  const Vector lam = es.eigenvalues().cwiseMax(0.0);
  Matrix P = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (P + P.transpose());
}

Vector project_affine_in_metric(const Matrix& B, const Vector& c, const SpdOperator& A,
                                const Vector& x) {
  if (B.cols() != x.size() || B.rows() != c.size() || A.dim() != x.size())
    throw ShapeError("project_affine_in_metric: dimension mismatch");
  if (B.rows() == 0) return x;
  Eigen::ColPivHouseholderQR<Matrix> qr(B);
  qr.setThreshold(1e-12);
  if (qr.rank() < B.rows()) throw RankError("project_affine_in_metric: B is not of full row rank");

  Matrix AinvBt(B.cols(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) AinvBt.col(j) = A.solve(B.row(j).transpose());
  const Matrix S = B * AinvBt;
  Eigen::LDLT<Matrix> ldlt(S);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14))
    throw ConditioningError("project_affine_in_metric: B A^-1 B^T is singular to working precision");
  const Vector mu = ldlt.solve(c - B * x);
  Vector y = x + AinvBt * mu;
  // one refinement pass
  const Vector res = c - B * y;
  y += AinvBt * ldlt.solve(res);
  return y;
}

// ---------------------------------------------------------------------------
// (HP) checker

void to_json(nlohmann::json& j, const HPReport& r) {
  j = nlohmann::json{
      {"HP1", {{"verdict", r.hp1}, {"min_alpha", r.min_alpha}, {"witness_index", r.min_alpha_index}, {"L", r.L}}},
      {"HP2", {{"verdict", r.hp2}, {"inverse_beta", r.inverse_beta}}},
      {"HP3",
       {{"verdict", r.hp3},
        {"max_ratio", r.max_ratio},
        {"witness_index", r.max_ratio_index},
        {"threshold", r.hp3_threshold}}},
      {"condition_numbers", r.condition_numbers}};
}

HPReport hp_check(std::span<const double> alphas, std::span<const double> betas, double L,
                  std::size_t horizon, double hp3_threshold) {
  if (alphas.empty() || betas.empty() || horizon == 0) throw DomainError("hp_check: empty sequences");
  if (alphas.size() < horizon || betas.size() < horizon)
    throw DomainError("hp_check: sequences shorter than horizon");

  HPReport rep;
  rep.L = L;
  rep.hp3_threshold = hp3_threshold;
  rep.min_alpha = kInf;
  std::vector<double> inv_beta(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    if (alphas[k] > betas[k] * (1.0 + 1e-12))
      throw DomainError("hp_check: alpha_k exceeds beta_k at k = " + std::to_string(k));
    if (alphas[k] < rep.min_alpha) {
      rep.min_alpha = alphas[k];
      rep.min_alpha_index = k;
    }
    inv_beta[k] = 1.0 / betas[k];
    rep.condition_numbers.push_back(betas[k] / alphas[k]);
  }
  rep.hp1 = rep.min_alpha > L ? Verdict::Pass : Verdict::Fail;

  rep.inverse_beta = summability(inv_beta, horizon);
  rep.hp2 = not_summable_verdict(rep.inverse_beta);

  for (std::size_t k = 0; k + 1 < horizon; ++k) {
    const double ratio = betas[k] / alphas[k + 1];
    if (ratio > rep.max_ratio) {
      rep.max_ratio = ratio;
      rep.max_ratio_index = k;
    }
  }
  if (horizon == 1) rep.max_ratio = betas[0] / alphas[0];
  rep.hp3 = rep.max_ratio <= hp3_threshold ? Verdict::Pass : Verdict::Fail;
  return rep;
}

}  // namespace klsplit
