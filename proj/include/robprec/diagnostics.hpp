#pragma once

// Checks against synthetic ground truth: the dimension-reduction cone and the
// noise statistic that the penalty level has to dominate.

#include <algorithm>
#include <cmath>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"
#include "robprec/projectors.hpp"
#include "robprec/sampling.hpp"
#include "robprec/solver.hpp"

namespace robprec {

struct ConeDiagnostic {
  /// ||Delta_{O^c}||_{2,1}
  double lhs = 0.0;
  /// 2 ||Delta_O||_{2,1}
  double rhs = 0.0;
  bool in_cone = true;
};

/// Delta = Theta_hat - Theta*, split along the true outlier rows.
inline ConeDiagnostic cone_diagnostic(const Matrix& theta_hat, const Matrix& theta_star, const IndexSet& outliers) {
  detail::require(theta_hat.rows() == theta_star.rows() && theta_hat.cols() == theta_star.cols(),
                  "theta shapes differ");
  const Matrix delta = theta_hat - theta_star;
  std::vector<bool> is_outlier(static_cast<std::size_t>(delta.rows()), false);
  for (Index i : outliers) {
    detail::require(i >= 0 && i < delta.rows(), "outlier index out of range");
    is_outlier[static_cast<std::size_t>(i)] = true;
  }
  ConeDiagnostic d;
  for (Index i = 0; i < delta.rows(); ++i) {
    const double norm = delta.row(i).norm();
    if (is_outlier[static_cast<std::size_t>(i)]) {
      d.rhs += norm;
    } else {
      d.lhs += norm;
    }
  }
  d.rhs *= 2.0;
  d.in_cone = d.lhs <= d.rhs;
  return d;
}

inline ConeDiagnostic cone_diagnostic(const FitRaw& fit, const ContaminatedDataset& dataset) {
  return cone_diagnostic(fit.theta_hat, dataset.theta_star, dataset.outliers);
}

/// max_i sqrt( sum_j (Z^j_i. eps_j)^2 / ||Z^j eps_j||^2 ), with Z^j built from
/// the columns of `xn` other than j. Invariant to rescaling the noise columns.
inline double lambda_condition_statistic(const Matrix& xn, const Matrix& noise, bool fit_intercept = false) {
  detail::require(xn.rows() == noise.rows() && xn.cols() == noise.cols(), "design and noise shapes differ");
  const ProjectorCache projectors(xn, fit_intercept);
  Vector row_sums = Vector::Zero(xn.rows());
  for (Index j = 0; j < xn.cols(); ++j) {
    const Vector z = projectors.apply(j, noise.col(j));
    const double denom = z.squaredNorm();
    if (!(denom > 0.0)) throw NumericalError("projected noise column " + std::to_string(j) + " vanishes");
    row_sums += z.cwiseAbs2() / denom;
  }
  return std::sqrt(row_sums.maxCoeff());
}

}  // namespace robprec
