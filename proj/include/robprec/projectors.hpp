#pragma once

#include <cmath>
#include <vector>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"

namespace robprec {

/// Per-column orthogonal projectors Z^j = I_n - Pi^{j^c}, where Pi^{j^c}
/// projects onto the span of the other columns of X^(n) (plus u_n = 1/sqrt(n)
/// when an intercept is fitted). Each Z^j is applied as v - Q_j (Q_j^T v)
/// with Q_j an orthonormal basis of the actual (possibly rank-deficient) span.
class ProjectorCache {
 public:
  ProjectorCache(const Matrix& xn, bool fit_intercept)
      : n_(xn.rows()), p_(xn.cols()), intercept_(fit_intercept) {
    detail::require(n_ >= 1 && p_ >= 1, "design must be nonempty");
    columns_.reserve(static_cast<std::size_t>(p_));
    for (Index j = 0; j < p_; ++j) columns_.push_back(factor(design_without(xn, j)));
    full_ = factor(full_design(xn));
  }

  Index n() const { return n_; }
  Index p() const { return p_; }
  bool fit_intercept() const { return intercept_; }

  /// Z^j v.
  Vector apply(Index j, const Eigen::Ref<const Vector>& v) const {
    return project_out(columns_[static_cast<std::size_t>(j)], v);
  }

  /// Z v for the projector onto the orthogonal complement of the whole design.
  Vector apply_full(const Eigen::Ref<const Vector>& v) const { return project_out(full_, v); }

  /// rank(Z^j) = n - rank of the j^c design.
  Index rank(Index j) const { return n_ - columns_[static_cast<std::size_t>(j)].rank; }

  bool rank_deficient() const {
    for (const auto& c : columns_)
      if (c.rank < c.width) return true;
    return false;
  }

  /// Minimum-norm least-squares coefficients of `target` on the j^c design.
  /// Layout: p - 1 coefficients for the other columns in increasing order,
  /// followed by the coefficient of u_n when an intercept is fitted.
  Vector solve(Index j, const Vector& target) const {
    const auto& c = columns_[static_cast<std::size_t>(j)];
    if (c.width == 0) return Vector();
    return c.cod.solve(target);
  }

  /// Explicit n x n matrix Z^j (tests and diagnostics only).
  Matrix dense(Index j) const {
    Matrix z(n_, n_);
    for (Index k = 0; k < n_; ++k) z.col(k) = apply(j, Vector::Unit(n_, k));
    return z;
  }

 private:
  struct Factor {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
    Matrix basis;
    Index rank = 0;
    Index width = 0;
  };

  Matrix design_without(const Matrix& xn, Index j) const {
    Matrix d(n_, p_ - 1 + (intercept_ ? 1 : 0));
    Index k = 0;
    for (Index c = 0; c < p_; ++c)
      if (c != j) d.col(k++) = xn.col(c);
    if (intercept_) d.col(k) = Vector::Constant(n_, 1.0 / std::sqrt(static_cast<double>(n_)));
    return d;
  }

  Matrix full_design(const Matrix& xn) const {
    Matrix d(n_, p_ + (intercept_ ? 1 : 0));
    d.leftCols(p_) = xn;
    if (intercept_) d.col(p_) = Vector::Constant(n_, 1.0 / std::sqrt(static_cast<double>(n_)));
    return d;
  }

  Factor factor(const Matrix& design) const {
    Factor f;
    f.width = design.cols();
    if (f.width == 0) {
      f.basis = Matrix(n_, 0);
      return f;
    }
    f.cod.compute(design);
    f.rank = f.cod.rank();
    f.basis = f.cod.householderQ() * Matrix::Identity(n_, f.rank);
    return f;
  }

  static Vector project_out(const Factor& f, const Eigen::Ref<const Vector>& v) {
    if (f.rank == 0) return v;
    return v - f.basis * (f.basis.transpose() * v);
  }

  Index n_;
  Index p_;
  bool intercept_;
  std::vector<Factor> columns_;
  Factor full_;
};

}  // namespace robprec
