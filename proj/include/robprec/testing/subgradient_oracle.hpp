#pragma once

// Reference minimizer for tiny instances: projected subgradient descent on the
// raw nonsmooth objective with steps a0/sqrt(k), keeping the best iterate.
// Shares no code with the main solver apart from the configuration type.

#include <cmath>
#include <limits>
#include <vector>

#include "robprec/linalg.hpp"
#include "robprec/solver.hpp"

namespace robprec::testing {

struct OracleResult {
  double objective = std::numeric_limits<double>::infinity();
  long iterations = 0;
};

namespace detail {

/// I - D D^+ via an SVD of D.
inline Matrix complement_projector(const Matrix& d) {
  const Index n = d.rows();
  if (d.cols() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(d, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double cut = 1e-12 * std::max(1.0, s.size() ? s(0) : 0.0);
  Matrix z = Matrix::Identity(n, n);
  for (Index k = 0; k < s.size(); ++k)
    if (s(k) > cut) z -= svd.matrixU().col(k) * svd.matrixU().col(k).transpose();
  return z;
}

inline double row_norm_sum(const Matrix& m) {
  double total = 0.0;
  for (Index i = 0; i < m.rows(); ++i) total += m.row(i).norm();
  return total;
}

inline void add_row_subgradient(Matrix& g, const Matrix& theta, double weight) {
  for (Index i = 0; i < theta.rows(); ++i) {
    const double norm = theta.row(i).norm();
    if (norm > 0.0) g.row(i) += weight * theta.row(i) / norm;
  }
}

}  // namespace detail

inline OracleResult moderate_oracle(const Matrix& xn, const SolverConfig& config, long iterations) {
  const Index n = xn.rows();
  const Index p = xn.cols();
  std::vector<Matrix> z;
  for (Index j = 0; j < p; ++j) {
    Matrix d(n, p - 1 + (config.fit_intercept ? 1 : 0));
    Index k = 0;
    for (Index c = 0; c < p; ++c)
      if (c != j) d.col(k++) = xn.col(c);
    if (config.fit_intercept) d.col(k) = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    z.push_back(detail::complement_projector(d));
  }
  const double lambda = config.lambda;
  const auto objective = [&](const Matrix& theta) {
    double f = lambda * detail::row_norm_sum(theta);
    for (Index j = 0; j < p; ++j) f += (z[j] * (xn.col(j) - theta.col(j))).norm();
    return f;
  };

  Matrix theta = Matrix::Zero(n, p);
  Matrix g(n, p);
  const double a0 = 0.5 * xn.norm() / std::sqrt(static_cast<double>(p));
  OracleResult best;
  best.objective = objective(theta);
  for (long k = 1; k <= iterations; ++k) {
    g.setZero();
    for (Index j = 0; j < p; ++j) {
      const Vector r = z[j] * (xn.col(j) - theta.col(j));
      const double nr = r.norm();
      if (nr > 0.0) g.col(j) -= z[j] * r / nr;
    }
    detail::add_row_subgradient(g, theta, lambda);
    const double gn = g.norm();
    if (gn == 0.0) break;
    theta -= (a0 / std::sqrt(static_cast<double>(k))) * g / gn;
    const double f = objective(theta);
    if (f < best.objective) best.objective = f;
    best.iterations = k;
  }
  return best;
}

inline OracleResult highdim_oracle(const Matrix& xn, const SolverConfig& config, long iterations) {
  const Index n = xn.rows();
  const Index p = xn.cols();
  const double u = 1.0 / std::sqrt(static_cast<double>(n));
  const double lambda = config.lambda;
  const double b_weight = config.lambda * config.gamma;
  const double constant = config.penalize_diagonal ? b_weight * static_cast<double>(p) : 0.0;
  const auto residual = [&](const Matrix& b, const Vector& c, const Matrix& theta) {
    Matrix r = xn * b - theta;
    for (Index j = 0; j < p; ++j) r.col(j).array() -= u * c(j);
    return r;
  };
  const auto objective = [&](const Matrix& b, const Vector& c, const Matrix& theta) {
    const Matrix r = residual(b, c, theta);
    double f = constant + lambda * detail::row_norm_sum(theta);
    for (Index j = 0; j < p; ++j) f += r.col(j).norm();
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < p; ++k)
        if (k != j) f += b_weight * std::abs(b(k, j));
    return f;
  };

  Matrix b = Matrix::Identity(p, p);
  Vector c = Vector::Zero(p);
  if (config.fit_intercept) c = xn.colwise().sum().transpose() * u;
  Matrix theta = Matrix::Zero(n, p);
  const double a0 = 0.5 * xn.norm() / std::sqrt(static_cast<double>(p));
  OracleResult best;
  best.objective = objective(b, c, theta);
  Matrix gb(p, p), gt(n, p);
  Vector gc(p);
  for (long k = 1; k <= iterations; ++k) {
    Matrix w = residual(b, c, theta);
    for (Index j = 0; j < p; ++j) {
      const double nr = w.col(j).norm();
      if (nr > 0.0) {
        w.col(j) /= nr;
      } else {
        w.col(j).setZero();
      }
    }
    gb = xn.transpose() * w;
    for (Index j = 0; j < p; ++j)
      for (Index r = 0; r < p; ++r)
        if (r != j && b(r, j) != 0.0) gb(r, j) += b_weight * (b(r, j) > 0.0 ? 1.0 : -1.0);
    gb.diagonal().setZero();
    gc = config.fit_intercept ? Vector(-u * w.colwise().sum().transpose()) : Vector::Zero(p);
    gt = -w;
    detail::add_row_subgradient(gt, theta, lambda);
    const double gn = std::sqrt(gb.squaredNorm() + gc.squaredNorm() + gt.squaredNorm());
    if (gn == 0.0) break;
    const double step = a0 / std::sqrt(static_cast<double>(k)) / gn;
    b -= step * gb;
    c -= step * gc;
    theta -= step * gt;
    b.diagonal().setOnes();  // projection onto {B_jj = 1}
    const double f = objective(b, c, theta);
    if (f < best.objective) best.objective = f;
    best.iterations = k;
  }
  return best;
}

/// Best objective found by projected subgradient descent.
inline OracleResult subgradient_oracle(const Matrix& xn, const SolverConfig& config, long iterations = 1000000) {
  return config.mode == SolverMode::Moderate ? moderate_oracle(xn, config, iterations)
                                             : highdim_oracle(xn, config, iterations);
}

}  // namespace robprec::testing
