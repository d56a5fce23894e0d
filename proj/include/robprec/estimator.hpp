#pragma once

// Statistical estimates assembled from a solver fit: diagonal precision
// entries, the precision matrix and its PD repair, the corruption matrix,
// the mean, outlier classification and the MLE re-estimation on inliers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"
#include "robprec/projectors.hpp"
#include "robprec/sampling.hpp"
#include "robprec/solver.hpp"

namespace robprec {

/// omega_jj = (2n/pi) ||r_j||_1^{-2} with r_j = (I - u u^T)(X^(n) B_j - Theta_j),
/// or the uncentered residual when `center` is false.
inline Vector diag_precision(const Matrix& xn, const Matrix& b_hat, const Matrix& theta_hat, bool center = true) {
  detail::require(b_hat.rows() == xn.cols() && b_hat.cols() == xn.cols(), "b_hat must be p x p");
  detail::require(theta_hat.rows() == xn.rows() && theta_hat.cols() == xn.cols(), "theta_hat must be n x p");
  const auto n = static_cast<double>(xn.rows());
  const Matrix fitted = xn * b_hat;
  Matrix r = fitted - theta_hat;
  if (center) r.rowwise() -= r.colwise().mean();
  Vector omega(xn.cols());
  for (Index j = 0; j < xn.cols(); ++j) {
    const double l1 = r.col(j).cwiseAbs().sum();
    // Residuals at rounding level are an interpolating fit too.
    const double scale = fitted.col(j).cwiseAbs().sum() + theta_hat.col(j).cwiseAbs().sum();
    if (!(l1 > 64.0 * std::numeric_limits<double>::epsilon() * scale))
      throw NumericalError("zero residual in column " + std::to_string(j) +
                           ": the fit interpolates the data (lambda too small?)");
    omega(j) = 2.0 * n / std::numbers::pi / (l1 * l1);
  }
  return omega;
}

/// B diag(omega).
inline Matrix assemble_precision(const Matrix& b_hat, const Vector& omega_diag) {
  detail::require(b_hat.cols() == omega_diag.size(), "dimension mismatch");
  return b_hat * omega_diag.asDiagonal();
}

/// Frobenius-nearest symmetric matrix with all eigenvalues >= pd_floor.
inline Matrix repair_pd(const Matrix& omega, double pd_floor = 1e-8) {
  detail::require(omega.rows() == omega.cols(), "matrix must be square");
  detail::require(pd_floor > 0.0, "pd_floor must be positive");
  const Matrix s = linalg::symmetrize(omega);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() >= pd_floor) return s;
  const Vector clipped = eig.eigenvalues().cwiseMax(pd_floor);
  return linalg::symmetrize(eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose());
}

/// sqrt(n) Theta B^+.
inline Matrix recover_corruption(const Matrix& theta_hat, const Matrix& b_hat, Index n) {
  detail::require(theta_hat.cols() == b_hat.rows(), "dimension mismatch");
  return std::sqrt(static_cast<double>(n)) * theta_hat * linalg::pseudo_inverse(b_hat);
}

inline Vector estimate_mean(const Matrix& x, const Matrix& e_hat) {
  detail::require(x.rows() == e_hat.rows() && x.cols() == e_hat.cols(), "dimension mismatch");
  return (x - e_hat).colwise().mean().transpose();
}

/// Rows of Theta with Euclidean norm above tau.
inline IndexSet classify_outliers(const Matrix& theta_hat, double tau = 1e-8) {
  detail::require(tau >= 0.0, "tau must be nonnegative");
  IndexSet out;
  for (Index i = 0; i < theta_hat.rows(); ++i)
    if (theta_hat.row(i).norm() > tau) out.push_back(i);
  return out;
}

struct MleEstimate {
  Matrix omega;
  Vector mu;
};

/// Gaussian MLE on the rows not listed in `outliers`. The precision is the
/// pseudo-inverse of the biased covariance; when p >= m it is singular and
/// the pseudo-inverse is PD-repaired.
inline MleEstimate reestimate_mle(const Matrix& x, const IndexSet& outliers, double pd_floor = 1e-8) {
  IndexSet sorted = outliers;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (Index i : sorted)
    if (i < 0 || i >= x.rows()) throw InvalidArgument("outlier index " + std::to_string(i) + " out of range");
  const IndexSet inliers = linalg::complement(sorted, x.rows());
  if (inliers.size() < 2) throw InvalidArgument("MLE re-estimation needs at least two inliers");
  const Matrix kept = linalg::select_rows(x, inliers);
  MleEstimate out;
  out.mu = kept.colwise().mean().transpose();
  out.omega = linalg::symmetric_pseudo_inverse(linalg::empirical_covariance(kept));
  if (x.cols() >= static_cast<Index>(inliers.size())) out.omega = repair_pd(out.omega, pd_floor);
  return out;
}

struct FitOptions {
  bool center = true;
  double tau = 1e-8;
  double pd_floor = 1e-8;
  /// Also run the MLE re-estimation on the classified inliers.
  bool reestimate = false;
};

struct FitResult {
  FitRaw raw;
  Vector omega_diag_hat;
  Matrix omega_hat;
  Matrix omega_hat_pd;
  Matrix e_hat;
  Vector mu_hat;
  IndexSet outliers_hat;
  /// Z^j (X^(n)_j - Theta_j), column by column.
  Matrix xi_hat;
  std::optional<MleEstimate> mle;
};

inline Matrix estimated_residuals(const Matrix& xn, const Matrix& theta_hat, bool fit_intercept) {
  const ProjectorCache projectors(xn, fit_intercept);
  Matrix xi(xn.rows(), xn.cols());
  for (Index j = 0; j < xn.cols(); ++j) xi.col(j) = projectors.apply(j, xn.col(j) - theta_hat.col(j));
  return xi;
}

/// Derives every estimate from a solver fit on X^(n) = X / sqrt(n).
inline FitResult complete_fit(const Matrix& x, FitRaw raw, const SolverConfig& config, const FitOptions& options = {}) {
  const Matrix xn = scaled_design(x);
  FitResult r;
  r.raw = std::move(raw);
  r.omega_diag_hat = diag_precision(xn, r.raw.b_hat, r.raw.theta_hat, options.center);
  r.omega_hat = assemble_precision(r.raw.b_hat, r.omega_diag_hat);
  r.omega_hat_pd = repair_pd(r.omega_hat, options.pd_floor);
  r.e_hat = recover_corruption(r.raw.theta_hat, r.raw.b_hat, x.rows());
  r.mu_hat = estimate_mean(x, r.e_hat);
  r.outliers_hat = classify_outliers(r.raw.theta_hat, options.tau);
  r.xi_hat = estimated_residuals(xn, r.raw.theta_hat, config.fit_intercept);
  if (options.reestimate) r.mle = reestimate_mle(x, r.outliers_hat, options.pd_floor);
  return r;
}

inline FitResult fit_pipeline(const Matrix& x, const SolverConfig& config, const FitOptions& options = {}) {
  return complete_fit(x, solve(scaled_design(x), config), config, options);
}

}  // namespace robprec
