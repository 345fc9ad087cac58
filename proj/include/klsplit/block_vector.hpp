#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>

#include "klsplit/errors.hpp"

namespace klsplit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Point of a product space H_1 x ... x H_p stored as p dense blocks.
class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(std::vector<Vector> blocks) : blocks_(std::move(blocks)) {}
  BlockVector(std::initializer_list<Vector> blocks) : blocks_(blocks) {}

  static BlockVector zeros(const std::vector<Eigen::Index>& dims) {
    std::vector<Vector> b;
    b.reserve(dims.size());
    for (auto d : dims) b.push_back(Vector::Zero(d));
    return BlockVector(std::move(b));
  }

  std::size_t size() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }

  Vector& operator[](std::size_t i) { return blocks_[i]; }
  const Vector& operator[](std::size_t i) const { return blocks_[i]; }

  const std::vector<Vector>& blocks() const noexcept { return blocks_; }

  std::vector<Eigen::Index> dims() const {
    std::vector<Eigen::Index> d;
    d.reserve(blocks_.size());
    for (const auto& b : blocks_) d.push_back(b.size());
    return d;
  }

  Eigen::Index total_dim() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& b : blocks_) s += b.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (const auto& b : blocks_)
      if (!b.allFinite()) return false;
    return true;
  }

  /// Blocks concatenated in order.
  Vector flatten() const {
    Vector out(total_dim());
    Eigen::Index off = 0;
    for (const auto& b : blocks_) {
      out.segment(off, b.size()) = b;
      off += b.size();
    }
    return out;
  }

  static BlockVector unflatten(const Vector& flat, const std::vector<Eigen::Index>& dims) {
    Eigen::Index total = 0;
    for (auto d : dims) total += d;
    if (total != flat.size()) throw ShapeError("unflatten: length does not match block dims");
    std::vector<Vector> b;
    Eigen::Index off = 0;
    for (auto d : dims) {
      b.push_back(flat.segment(off, d));
      off += d;
    }
    return BlockVector(std::move(b));
  }

  BlockVector& operator+=(const BlockVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] += o.blocks_[i];
    return *this;
  }
  BlockVector& operator-=(const BlockVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i] -= o.blocks_[i];
    return *this;
  }
  BlockVector& operator*=(double s) {
    for (auto& b : blocks_) b *= s;
    return *this;
  }

  friend BlockVector operator+(BlockVector a, const BlockVector& b) { return a += b; }
  friend BlockVector operator-(BlockVector a, const BlockVector& b) { return a -= b; }
  friend BlockVector operator*(double s, BlockVector a) { return a *= s; }

 private:
  void check_same(const BlockVector& o) const {
    if (o.blocks_.size() != blocks_.size()) throw ShapeError("block count mismatch");
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      if (o.blocks_[i].size() != blocks_[i].size()) throw ShapeError("block dimension mismatch");
  }

  std::vector<Vector> blocks_;
};

/// Euclidean distance between two block vectors.
inline double distance(const BlockVector& a, const BlockVector& b) { return (a - b).norm(); }

}  // namespace klsplit
