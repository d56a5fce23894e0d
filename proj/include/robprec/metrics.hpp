#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"

namespace robprec {

inline constexpr double kInfinityNorm = std::numeric_limits<double>::infinity();

/// ||A - B||_F.
inline double frobenius_error(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidArgument("frobenius_error: shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  return (a - b).norm();
}

namespace detail {

inline double vector_norm(const Eigen::Ref<const Eigen::RowVectorXd>& v, double q) {
  if (q == 1.0) return v.cwiseAbs().sum();
  if (q == 2.0) return v.norm();
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// ||M||_{q1,q2}: q1-norms of the rows, aggregated by a q2-norm. q in {1, 2, inf}.
inline double mixed_norm(const Matrix& m, double q1, double q2) {
  const auto valid = [](double q) { return q == 1.0 || q == 2.0 || q == kInfinityNorm; };
  detail::require(valid(q1) && valid(q2), "mixed_norm: exponents must be 1, 2 or infinity");
  Eigen::RowVectorXd rows(m.rows());
  for (Index i = 0; i < m.rows(); ++i) rows(i) = detail::vector_norm(m.row(i), q1);
  return detail::vector_norm(rows, q2);
}

}  // namespace robprec
