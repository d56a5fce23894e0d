#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "robprec/errors.hpp"

namespace robprec {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
/// Sorted row indices.
using IndexSet = std::vector<Index>;

namespace linalg {

inline double max_asymmetry(const Matrix& a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

/// Moore-Penrose pseudo-inverse through a complete orthogonal decomposition.
inline Matrix pseudo_inverse(const Matrix& a) {
  if (a.size() == 0) return Matrix(a.cols(), a.rows());
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  return cod.pseudoInverse();
}

/// Pseudo-inverse of a symmetric PSD matrix via its eigendecomposition;
/// eigenvalues below `rtol * max|eigenvalue|` are treated as zero.
inline Matrix symmetric_pseudo_inverse(const Matrix& s, double rtol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(s));
  const Vector& w = eig.eigenvalues();
  const double cut = rtol * std::max(w.cwiseAbs().maxCoeff(), 0.0);
  Vector inv = Vector::Zero(w.size());
  for (Index k = 0; k < w.size(); ++k)
    if (std::abs(w(k)) > cut && w(k) != 0.0) inv(k) = 1.0 / w(k);
  const Matrix& v = eig.eigenvectors();
  return symmetrize(v * inv.asDiagonal() * v.transpose());
}

inline Matrix select_rows(const Matrix& m, const IndexSet& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

inline IndexSet complement(const IndexSet& sorted, Index n) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(n) - std::min<std::size_t>(sorted.size(), n));
  std::size_t k = 0;
  for (Index i = 0; i < n; ++i) {
    if (k < sorted.size() && sorted[k] == i) {
      ++k;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

/// Biased (divisor m) covariance of the rows of `x` about their mean.
inline Matrix empirical_covariance(const Matrix& x) {
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  return symmetrize(centered.transpose() * centered / static_cast<double>(x.rows()));
}

}  // namespace linalg
}  // namespace robprec
