#pragma once

// Penalized square-root-of-least-squares programs for (B, c, Theta):
//
//   Moderate: min_Theta  sum_j ||Z^j (X^(n)_j - Theta_j)||_2 + lambda ||Theta||_{2,1}
//             with B recovered column-wise by least squares on the j^c design.
//   HighDim:  min_{B: B_jj = 1, c, Theta}
//               sum_j ||X^(n) B_j - c_j u_n - Theta_j||_2
//               + lambda (||Theta||_{2,1} + gamma ||B||_{1,1})
//
// The column-wise norms are smoothed as sqrt(||r||^2 + eps^2) along a
// decreasing eps schedule and minimized by monotone accelerated proximal
// gradient; rows of Theta are group soft-thresholded, so exact row sparsity
// is preserved. The data are rescaled to unit RMS column norm before solving,
// which makes the smoothing levels and tolerances scale free.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>
#include <vector>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"
#include "robprec/projectors.hpp"
#include "robprec/proximal.hpp"

namespace robprec {

enum class SolverMode { Moderate, HighDim };

inline std::string_view to_string(SolverMode m) { return m == SolverMode::Moderate ? "moderate" : "highdim"; }

inline SolverMode parse_solver_mode(std::string_view name) {
  if (name == "moderate") return SolverMode::Moderate;
  if (name == "highdim") return SolverMode::HighDim;
  throw InvalidArgument("unknown solver mode '" + std::string(name) + "'");
}

struct SolverConfig {
  double lambda = 1.0;
  double gamma = 0.0;
  double delta = 0.05;
  SolverMode mode = SolverMode::Moderate;
  bool fit_intercept = false;
  /// Adds the constant lambda * gamma * p of the unit diagonal to the objective.
  bool penalize_diagonal = false;
  /// Budget of proximal-gradient iterations over all smoothing stages.
  long max_outer_iterations = 50000;
  double tolerance_objective = 1e-9;
  double tolerance_kkt = 1e-6;
  std::vector<double> smoothing_schedule{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  /// Nonzero rows of Theta with norm at or below this (relative to the data
  /// scale) are zeroed in the final cleanup pass.
  double sparsity_floor = 1e-12;

  static SolverConfig moderate(double lambda) {
    SolverConfig c;
    c.lambda = lambda;
    return c;
  }

  static SolverConfig highdim(double lambda, double gamma) {
    SolverConfig c;
    c.mode = SolverMode::HighDim;
    c.lambda = lambda;
    c.gamma = gamma;
    c.fit_intercept = true;
    return c;
  }

  void validate() const {
    detail::require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be nonnegative");
    detail::require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be nonnegative");
    detail::require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
    detail::require(max_outer_iterations > 0, "max_outer_iterations must be positive");
    detail::require(tolerance_objective > 0.0 && tolerance_kkt > 0.0, "tolerances must be positive");
    detail::require(!smoothing_schedule.empty(), "smoothing schedule must be nonempty");
    for (std::size_t k = 0; k < smoothing_schedule.size(); ++k) {
      detail::require(smoothing_schedule[k] > 0.0, "smoothing levels must be positive");
      if (k > 0)
        detail::require(smoothing_schedule[k] < smoothing_schedule[k - 1],
                        "smoothing schedule must be strictly decreasing");
    }
  }
};

enum class SolverStatus { Converged, IterationBudget, Degenerate };

inline std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::IterationBudget: return "iteration_budget";
    case SolverStatus::Degenerate: return "degenerate";
  }
  return "unknown";
}

struct FitRaw {
  Matrix b_hat;
  Matrix theta_hat;
  Vector c_hat;
  double objective = 0.0;
  /// Nonincreasing; the last entry is the exact (unsmoothed) objective.
  std::vector<double> objective_trace;
  double kkt_residual = 0.0;
  long iterations = 0;
  SolverStatus status = SolverStatus::Converged;
};

/// 6 sqrt(p log(2np/delta) / n).
inline double universal_lambda_moderate(Index n, Index p, double delta) {
  detail::require(n >= 1 && p >= 1, "n and p must be positive");
  detail::require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
  const double arg = 2.0 * static_cast<double>(n) * static_cast<double>(p) / delta;
  detail::require(arg > 1.0, "2np/delta must exceed 1");
  return 6.0 * std::sqrt(static_cast<double>(p) * std::log(arg) / static_cast<double>(n));
}

/// 6 sqrt(log(2np/delta) / (n - outlier_budget)).
inline double universal_lambda_highdim(Index n, Index p, double delta, Index outlier_budget) {
  detail::require(n >= 1 && p >= 1, "n and p must be positive");
  detail::require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
  detail::require(outlier_budget >= 0 && outlier_budget < n, "outlier budget must be in [0, n)");
  const double arg = 2.0 * static_cast<double>(n) * static_cast<double>(p) / delta;
  detail::require(arg > 1.0, "2np/delta must exceed 1");
  return 6.0 * std::sqrt(std::log(arg) / static_cast<double>(n - outlier_budget));
}

/// sum_i ||M_i.||_2.
inline double row_norm_sum(const Matrix& m) {
  double s = 0.0;
  for (Index i = 0; i < m.rows(); ++i) s += m.row(i).norm();
  return s;
}

/// Full program value at (B, c, Theta); with gamma = 0 and c = 0 this is the
/// moderate objective.
inline double objective_value(const Matrix& xn, const Matrix& b, const Vector& c, const Matrix& theta,
                              const SolverConfig& config) {
  const double root_n = std::sqrt(static_cast<double>(xn.rows()));
  Matrix resid = xn * b - theta;
  if (c.size() == xn.cols()) resid.rowwise() -= c.transpose() / root_n;
  double fidelity = 0.0;
  for (Index j = 0; j < resid.cols(); ++j) fidelity += resid.col(j).norm();
  double l1 = 0.0;
  if (config.gamma > 0.0) {
    l1 = b.cwiseAbs().sum() - b.diagonal().cwiseAbs().sum();
    if (config.penalize_diagonal) l1 += b.diagonal().cwiseAbs().sum();
  }
  return fidelity + config.lambda * (row_norm_sum(theta) + config.gamma * l1);
}

/// sum_j ||Z^j (X_j - Theta_j)||_2 + lambda ||Theta||_{2,1}.
inline double moderate_objective(const ProjectorCache& projectors, const Matrix& xn, const Matrix& theta,
                                 double lambda) {
  double fidelity = 0.0;
  for (Index j = 0; j < xn.cols(); ++j)
    fidelity += projectors.apply(j, xn.col(j) - theta.col(j)).norm();
  return fidelity + lambda * row_norm_sum(theta);
}

namespace detail {

/// Maximal group-lasso stationarity violation of rows of Theta given the
/// smooth-part gradient with respect to Theta.
template <class GradBlock, class ThetaBlock>
double group_stationarity(const GradBlock& grad, const ThetaBlock& theta, double lambda) {
  double worst = 0.0;
  for (Index i = 0; i < theta.rows(); ++i) {
    const double norm = theta.row(i).norm();
    const double v = norm > 0.0 ? (grad.row(i) + lambda * theta.row(i) / norm).norm()
                                : std::max(0.0, grad.row(i).norm() - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

class ModerateProblem {
 public:
  ModerateProblem(const ProjectorCache& projectors, const Matrix& x, double lambda)
      : projectors_(projectors), x_(x), lambda_(lambda), n_(x.rows()), p_(x.cols()) {}

  double smooth(const Vector& flat, double eps, Vector& grad) const {
    Eigen::Map<const Matrix> theta(flat.data(), n_, p_);
    grad.resize(flat.size());
    Eigen::Map<Matrix> g(grad.data(), n_, p_);
    double value = 0.0;
    for (Index j = 0; j < p_; ++j) {
      const Vector r = projectors_.apply(j, x_.col(j) - theta.col(j));
      const double nr = std::sqrt(r.squaredNorm() + eps * eps);
      value += nr;
      if (nr > 0.0) {
        g.col(j) = -r / nr;
      } else {
        g.col(j).setZero();
      }
    }
    return value;
  }

  double smooth_value(const Vector& flat, double eps) const {
    Eigen::Map<const Matrix> theta(flat.data(), n_, p_);
    double value = 0.0;
    for (Index j = 0; j < p_; ++j)
      value += std::sqrt(projectors_.apply(j, x_.col(j) - theta.col(j)).squaredNorm() + eps * eps);
    return value;
  }

  double penalty(const Vector& flat) const {
    Eigen::Map<const Matrix> theta(flat.data(), n_, p_);
    return lambda_ * row_norm_sum(theta);
  }

  void prox(Vector& flat, double step) const {
    Eigen::Map<Matrix> theta(flat.data(), n_, p_);
    prox::group_soft_threshold_rows(theta, lambda_ * step);
  }

  double stationarity(const Vector& flat, const Vector& grad) const {
    Eigen::Map<const Matrix> theta(flat.data(), n_, p_);
    Eigen::Map<const Matrix> g(grad.data(), n_, p_);
    return group_stationarity(g, theta, lambda_);
  }

  double curvature() const { return 1.0; }

 private:
  const ProjectorCache& projectors_;
  const Matrix& x_;
  double lambda_;
  Index n_;
  Index p_;
};

/// Flat layout: B (p x p, column-major), c (p), Theta (n x p, column-major).
class HighDimProblem {
 public:
  HighDimProblem(const Matrix& x, double lambda, double b_penalty, bool fit_intercept)
      : x_(x), lambda_(lambda), b_penalty_(b_penalty), intercept_(fit_intercept), n_(x.rows()), p_(x.cols()),
        u_scale_(1.0 / std::sqrt(static_cast<double>(x.rows()))) {}

  Index size() const { return p_ * p_ + p_ + n_ * p_; }

  Vector pack(const Matrix& b, const Vector& c, const Matrix& theta) const {
    Vector flat(size());
    Eigen::Map<Matrix>(flat.data(), p_, p_) = b;
    flat.segment(p_ * p_, p_) = c;
    Eigen::Map<Matrix>(flat.data() + p_ * p_ + p_, n_, p_) = theta;
    return flat;
  }

  Eigen::Map<const Matrix> b(const Vector& flat) const { return {flat.data(), p_, p_}; }
  Eigen::Map<const Vector> c(const Vector& flat) const { return {flat.data() + p_ * p_, p_}; }
  Eigen::Map<const Matrix> theta(const Vector& flat) const { return {flat.data() + p_ * p_ + p_, n_, p_}; }

  Matrix residual(const Vector& flat) const {
    Matrix r = x_ * b(flat) - theta(flat);
    r.rowwise() -= u_scale_ * c(flat).transpose();
    return r;
  }

  double smooth(const Vector& flat, double eps, Vector& grad) const {
    Matrix w = residual(flat);
    double value = 0.0;
    for (Index j = 0; j < p_; ++j) {
      const double nr = std::sqrt(w.col(j).squaredNorm() + eps * eps);
      value += nr;
      if (nr > 0.0) {
        w.col(j) /= nr;
      } else {
        w.col(j).setZero();
      }
    }
    grad.resize(size());
    Eigen::Map<Matrix> gb(grad.data(), p_, p_);
    gb.noalias() = x_.transpose() * w;
    gb.diagonal().setZero();
    if (intercept_) {
      grad.segment(p_ * p_, p_) = -u_scale_ * w.colwise().sum().transpose();
    } else {
      grad.segment(p_ * p_, p_).setZero();
    }
    Eigen::Map<Matrix>(grad.data() + p_ * p_ + p_, n_, p_) = -w;
    return value;
  }

  double smooth_value(const Vector& flat, double eps) const {
    const Matrix r = residual(flat);
    double value = 0.0;
    for (Index j = 0; j < p_; ++j) value += std::sqrt(r.col(j).squaredNorm() + eps * eps);
    return value;
  }

  double penalty(const Vector& flat) const {
    const auto bm = b(flat);
    const double l1 = bm.cwiseAbs().sum() - bm.diagonal().cwiseAbs().sum();
    return lambda_ * row_norm_sum(theta(flat)) + b_penalty_ * l1;
  }

  void prox(Vector& flat, double step) const {
    Eigen::Map<Matrix> bm(flat.data(), p_, p_);
    const double t = b_penalty_ * step;
    for (Index j = 0; j < p_; ++j)
      for (Index k = 0; k < p_; ++k) bm(k, j) = k == j ? 1.0 : prox::soft_threshold(bm(k, j), t);
    if (!intercept_) flat.segment(p_ * p_, p_).setZero();
    Eigen::Map<Matrix> th(flat.data() + p_ * p_ + p_, n_, p_);
    prox::group_soft_threshold_rows(th, lambda_ * step);
  }

  double stationarity(const Vector& flat, const Vector& grad) const {
    Eigen::Map<const Matrix> gb(grad.data(), p_, p_);
    const auto bm = b(flat);
    double worst = 0.0;
    for (Index j = 0; j < p_; ++j)
      for (Index k = 0; k < p_; ++k) {
        if (k == j) continue;
        const double g = gb(k, j);
        const double v = bm(k, j) != 0.0 ? std::abs(g + b_penalty_ * (bm(k, j) > 0 ? 1.0 : -1.0))
                                         : std::max(0.0, std::abs(g) - b_penalty_);
        worst = std::max(worst, v);
      }
    if (intercept_) worst = std::max(worst, grad.segment(p_ * p_, p_).cwiseAbs().maxCoeff());
    Eigen::Map<const Matrix> gt(grad.data() + p_ * p_ + p_, n_, p_);
    return std::max(worst, group_stationarity(gt, theta(flat), lambda_));
  }

  /// Upper bound on the squared norm of (B, c, Theta) -> X B - u c^T - Theta.
  double curvature() const { return x_.squaredNorm() + 2.0; }

 private:
  const Matrix& x_;
  double lambda_;
  double b_penalty_;
  bool intercept_;
  Index n_;
  Index p_;
  double u_scale_;
};

/// Root-mean-square column norm.
inline double data_scale(const Matrix& xn) {
  return xn.norm() / std::sqrt(static_cast<double>(xn.cols()));
}

inline ProxGradOptions engine_options(const SolverConfig& config) {
  ProxGradOptions opt;
  opt.schedule = config.smoothing_schedule;
  opt.max_iterations = config.max_outer_iterations;
  opt.tolerance_objective = config.tolerance_objective;
  opt.tolerance_kkt = config.tolerance_kkt;
  return opt;
}

/// Zero-residual threshold relative to the data scale.
inline constexpr double kZeroResidual = 1e-13;

/// KKT violation of the moderate program at Theta (B eliminated).
inline double moderate_kkt(const ProjectorCache& projectors, const Matrix& xn, const Matrix& theta,
                           double lambda, bool* zero_residual = nullptr) {
  const Index n = xn.rows();
  const Index p = xn.cols();
  const double floor = kZeroResidual * std::max(xn.norm(), std::numeric_limits<double>::min());
  Matrix grad = Matrix::Zero(n, p);
  std::vector<bool> flat_column(static_cast<std::size_t>(p), false);
  for (Index j = 0; j < p; ++j) {
    const Vector r = projectors.apply(j, xn.col(j) - theta.col(j));
    const double nr = r.norm();
    if (nr <= floor) {
      flat_column[static_cast<std::size_t>(j)] = true;
    } else {
      grad.col(j) = -r / nr;
    }
  }
  double worst = 0.0;
  Matrix sub = Matrix::Zero(n, p);  // penalty subgradient, zero on inactive rows
  for (Index i = 0; i < n; ++i) {
    const double norm = theta.row(i).norm();
    if (norm > 0.0) sub.row(i) = theta.row(i) / norm;
  }
  bool any_flat = false;
  for (Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd g = grad.row(i);
    Eigen::RowVectorXd s = sub.row(i);
    for (Index j = 0; j < p; ++j)
      if (flat_column[static_cast<std::size_t>(j)]) g(j) = s(j) = 0.0;
    const double v = theta.row(i).norm() > 0.0 ? (g + lambda * s).norm() : std::max(0.0, g.norm() - lambda);
    worst = std::max(worst, v);
  }
  for (Index j = 0; j < p; ++j) {
    if (!flat_column[static_cast<std::size_t>(j)]) continue;
    any_flat = true;
    const Vector w = lambda * sub.col(j);
    worst = std::max(worst, (w - projectors.apply(j, w)).norm() + std::max(0.0, w.norm() - 1.0));
  }
  if (zero_residual) *zero_residual = any_flat;
  return worst;
}

inline double highdim_kkt(const Matrix& xn, const Matrix& b, const Vector& c, const Matrix& theta,
                          const SolverConfig& config, bool* zero_residual = nullptr) {
  const Index n = xn.rows();
  const Index p = xn.cols();
  const double root_n = std::sqrt(static_cast<double>(n));
  const double lambda = config.lambda;
  const double b_penalty = config.lambda * config.gamma;
  const double floor = kZeroResidual * std::max(xn.norm(), std::numeric_limits<double>::min());
  Matrix w = xn * b - theta;
  if (c.size() == p) w.rowwise() -= c.transpose() / root_n;
  Matrix sub = Matrix::Zero(n, p);
  for (Index i = 0; i < n; ++i) {
    const double norm = theta.row(i).norm();
    if (norm > 0.0) sub.row(i) = theta.row(i) / norm;
  }
  std::vector<bool> flat_column(static_cast<std::size_t>(p), false);
  double worst = 0.0;
  bool any_flat = false;
  for (Index j = 0; j < p; ++j) {
    const double nr = w.col(j).norm();
    if (nr <= floor) {
      flat_column[static_cast<std::size_t>(j)] = true;
      any_flat = true;
      w.col(j) = lambda * sub.col(j);
      worst = std::max(worst, std::max(0.0, w.col(j).norm() - 1.0));
    } else {
      w.col(j) /= nr;
    }
  }
  const Matrix gb = xn.transpose() * w;
  for (Index j = 0; j < p; ++j)
    for (Index k = 0; k < p; ++k) {
      if (k == j) continue;
      const double g = gb(k, j);
      const double v = b(k, j) != 0.0 ? std::abs(g + b_penalty * (b(k, j) > 0 ? 1.0 : -1.0))
                                      : std::max(0.0, std::abs(g) - b_penalty);
      worst = std::max(worst, v);
    }
  if (config.fit_intercept) worst = std::max(worst, (w.colwise().sum() / root_n).cwiseAbs().maxCoeff());
  for (Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd g = -w.row(i);
    Eigen::RowVectorXd s = sub.row(i);
    for (Index j = 0; j < p; ++j)
      if (flat_column[static_cast<std::size_t>(j)]) g(j) = s(j) = 0.0;
    const double v = theta.row(i).norm() > 0.0 ? (g + lambda * s).norm() : std::max(0.0, g.norm() - lambda);
    worst = std::max(worst, v);
  }
  if (zero_residual) *zero_residual = any_flat;
  return worst;
}

/// Zeroes rows of Theta at or below `floor` when that does not raise the
/// objective beyond rounding.
template <class Objective>
void sparsify_rows(Matrix& theta, double floor, const Objective& objective) {
  Matrix candidate = theta;
  bool changed = false;
  for (Index i = 0; i < candidate.rows(); ++i) {
    const double norm = candidate.row(i).norm();
    if (norm > 0.0 && norm <= floor) {
      candidate.row(i).setZero();
      changed = true;
    }
  }
  if (!changed) return;
  const double before = objective(theta);
  if (objective(candidate) <= before + 1e-13 * std::abs(before)) theta = std::move(candidate);
}

/// Absorbs the residual of column j into Theta, making that fidelity term
/// exactly zero, whenever this lowers the exact objective. Smoothing leaves
/// such columns with a residual of the order of the last smoothing level.
template <class Residual, class Objective>
void snap_residuals(Matrix& theta, Residual&& residual, Objective&& objective) {
  double current = objective(theta);
  for (Index j = 0; j < theta.cols(); ++j) {
    const Vector r = residual(j);
    if (r.squaredNorm() == 0.0) continue;
    Matrix candidate = theta;
    candidate.col(j) += r;
    const double value = objective(candidate);
    if (value < current) {
      theta = std::move(candidate);
      current = value;
    }
  }
}

inline void check_finite(const Matrix& xn) {
  detail::require(xn.allFinite(), "design contains non-finite values");
}

inline constexpr Index kPolishMaxVariables = 256;

/// Newton refinement of
///   sum_j ||X B_j - c_j u - Theta_j|| + lambda sum_{i in S} ||Theta_i|| + b_weight sum |B_kj|
/// over the off-diagonal entries of B flagged in `free_b`, c (when `intercept`)
/// and the rows S of Theta that are nonzero on entry. Steps are accepted when
/// they lower the gradient norm. Returns false, leaving the arguments
/// untouched, when there are too many variables or the smooth structure is
/// lost (a row or residual column reaching zero, a free entry of B changing
/// sign).
inline bool newton_polish(const Matrix& x, Matrix& b, Vector& c, Matrix& theta, double lambda, double b_weight,
                          bool intercept, const std::vector<std::vector<Index>>& free_b) {
  const Index n = x.rows();
  const Index p = x.cols();
  const double u = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i)
    if (theta.row(i).squaredNorm() > 0.0) rows.push_back(i);
  const Index s = static_cast<Index>(rows.size());
  std::vector<Index> offset(static_cast<std::size_t>(p) + 1, 0);
  for (Index j = 0; j < p; ++j) {
    const Index width = static_cast<Index>(free_b[static_cast<std::size_t>(j)].size()) + (intercept ? 1 : 0) + s;
    offset[static_cast<std::size_t>(j) + 1] = offset[static_cast<std::size_t>(j)] + width;
  }
  const Index total = offset.back();
  if (total == 0 || total > kPolishMaxVariables) return false;

  Matrix bw = b;
  Vector cw = c;
  Matrix tw = theta;
  const Matrix sign_b = b.cwiseSign();
  const double floor = kZeroResidual * std::max(x.norm(), std::numeric_limits<double>::min());

  const auto column_design = [&](Index j) {
    const auto& fb = free_b[static_cast<std::size_t>(j)];
    Matrix a = Matrix::Zero(n, offset[static_cast<std::size_t>(j) + 1] - offset[static_cast<std::size_t>(j)]);
    Index k = 0;
    for (Index row : fb) a.col(k++) = x.col(row);
    if (intercept) a.col(k++).setConstant(-u);
    for (Index r = 0; r < s; ++r) a(rows[static_cast<std::size_t>(r)], k++) = -1.0;
    return a;
  };
  std::vector<Matrix> designs;
  designs.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) designs.push_back(column_design(j));

  // Gradient and Hessian at (bw, cw, tw); false if the point is not smooth.
  const auto derivatives = [&](Vector& g, Matrix* h) {
    g = Vector::Zero(total);
    if (h) *h = Matrix::Zero(total, total);
    Matrix r = x * bw - tw;
    r.rowwise() -= u * cw.transpose();
    for (Index j = 0; j < p; ++j) {
      const double nr = r.col(j).norm();
      if (!(nr > floor)) return false;
      const Vector rhat = r.col(j) / nr;
      const Index o = offset[static_cast<std::size_t>(j)];
      const Matrix& a = designs[static_cast<std::size_t>(j)];
      const Vector atr = a.transpose() * rhat;
      g.segment(o, a.cols()) += atr;
      if (h) h->block(o, o, a.cols(), a.cols()) += (a.transpose() * a - atr * atr.transpose()) / nr;
      if (b_weight > 0.0) {
        const auto& fb = free_b[static_cast<std::size_t>(j)];
        for (std::size_t k = 0; k < fb.size(); ++k) g(o + static_cast<Index>(k)) += b_weight * sign_b(fb[k], j);
      }
    }
    for (Index r2 = 0; r2 < s; ++r2) {
      const Eigen::RowVectorXd t = tw.row(rows[static_cast<std::size_t>(r2)]);
      const double nt = t.norm();
      if (!(nt > 0.0)) return false;
      std::vector<Index> idx(static_cast<std::size_t>(p));
      for (Index j = 0; j < p; ++j)
        idx[static_cast<std::size_t>(j)] = offset[static_cast<std::size_t>(j) + 1] - s + r2;
      for (Index j = 0; j < p; ++j) {
        g(idx[static_cast<std::size_t>(j)]) += lambda * t(j) / nt;
        if (!h) continue;
        for (Index k = 0; k < p; ++k)
          (*h)(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(k)]) +=
              lambda * ((j == k ? 1.0 : 0.0) - t(j) * t(k) / (nt * nt)) / nt;
      }
    }
    return true;
  };
  const auto move = [&](const Vector& d, double step) {
    for (Index j = 0; j < p; ++j) {
      const auto& fb = free_b[static_cast<std::size_t>(j)];
      Index k = offset[static_cast<std::size_t>(j)];
      for (Index row : fb) bw(row, j) += step * d(k++);
      if (intercept) cw(j) += step * d(k++);
      for (Index r = 0; r < s; ++r) tw(rows[static_cast<std::size_t>(r)], j) += step * d(k++);
    }
  };
  const auto signs_kept = [&] {
    if (b_weight == 0.0) return true;
    for (Index j = 0; j < p; ++j)
      for (Index row : free_b[static_cast<std::size_t>(j)])
        if (bw(row, j) == 0.0 || (bw(row, j) > 0.0) != (sign_b(row, j) > 0.0)) return false;
    return true;
  };

  Vector g;
  Matrix h;
  if (!derivatives(g, &h)) return false;
  double gnorm = g.norm();
  for (int iter = 0; iter < 30 && gnorm > 0.0; ++iter) {
    const double ridge = 1e-14 * std::max(h.diagonal().cwiseAbs().maxCoeff(), 1.0);
    h.diagonal().array() += ridge;
    const Vector d = -h.ldlt().solve(g);
    if (!d.allFinite()) return false;
    bool accepted = false;
    for (double step = 1.0; step >= 1.0 / 1024.0; step /= 2.0) {
      const Matrix b0 = bw, t0 = tw;
      const Vector c0 = cw;
      move(d, step);
      Vector g_new;
      if (signs_kept() && derivatives(g_new, nullptr) && g_new.norm() < gnorm) {
        accepted = true;
        break;
      }
      bw = b0;
      cw = c0;
      tw = t0;
    }
    if (!accepted) break;
    if (!derivatives(g, &h)) return false;
    gnorm = g.norm();
  }
  b = std::move(bw);
  c = std::move(cw);
  theta = std::move(tw);
  return true;
}

}  // namespace detail

/// KKT residual of `fit` for the program selected by `config` on data `xn`.
/// Evaluated on the data rescaled to unit RMS column norm (the solver's
/// working units), so the value is invariant to rescaling X.
inline double kkt_residual(const FitRaw& fit, const Matrix& xn, const SolverConfig& config) {
  const double scale = detail::data_scale(xn);
  if (scale == 0.0) return 0.0;
  const Matrix x = xn / scale;
  const Matrix theta = fit.theta_hat / scale;
  if (config.mode == SolverMode::Moderate) {
    ProjectorCache projectors(x, config.fit_intercept);
    return detail::moderate_kkt(projectors, x, theta, config.lambda);
  }
  SolverConfig normalized = config;
  normalized.gamma = config.gamma / scale;
  const Vector c = fit.c_hat.size() == xn.cols() ? Vector(fit.c_hat / scale) : Vector::Zero(xn.cols());
  return detail::highdim_kkt(x, fit.b_hat, c, theta, normalized);
}

/// Least-squares B (and c) given Theta: X^(n)_{j^c} B_{j^c,j} - u c_j = -Pi (X^(n)_j - Theta_j),
/// minimum-norm when the j^c design is rank deficient.
inline void coefficients_given_theta(const ProjectorCache& projectors, const Matrix& xn, const Matrix& theta,
                                     Matrix& b, Vector& c) {
  const Index p = xn.cols();
  b = Matrix::Identity(p, p);
  c = Vector::Zero(p);
  for (Index j = 0; j < p; ++j) {
    const Vector beta = projectors.solve(j, -(xn.col(j) - theta.col(j)));
    Index k = 0;
    for (Index row = 0; row < p; ++row)
      if (row != j) b(row, j) = beta(k++);
    if (projectors.fit_intercept()) c(j) = -beta(k);
  }
}

inline FitRaw solve_moderate(const Matrix& xn, const SolverConfig& config) {
  config.validate();
  detail::check_finite(xn);
  detail::require(config.mode == SolverMode::Moderate, "solve_moderate requires Moderate mode");
  if (config.lambda <= 0.0)
    throw InvalidArgument("objective has non-unique trivial minimizers at lambda = 0 (Theta = X^(n))");
  const Index n = xn.rows();
  const Index p = xn.cols();
  if (n <= p) throw InvalidArgument("moderate mode requires n > p; use HighDim mode");

  FitRaw fit;
  const double scale = detail::data_scale(xn);
  if (scale == 0.0) {
    fit.b_hat = Matrix::Identity(p, p);
    fit.theta_hat = Matrix::Zero(n, p);
    fit.c_hat = Vector::Zero(p);
    fit.objective_trace = {0.0};
    fit.status = SolverStatus::Degenerate;
    return fit;
  }
  const Matrix x = xn / scale;
  const ProjectorCache projectors(x, config.fit_intercept);
  const detail::ModerateProblem problem(projectors, x, config.lambda);

  ProxGradResult run = minimize_composite(problem, Vector::Zero(n * p), detail::engine_options(config));
  Matrix theta = Eigen::Map<const Matrix>(run.x.data(), n, p);

  // Exact prox-gradient cleanup on the unsmoothed objective.
  const auto exact = [&](const Matrix& t) { return moderate_objective(projectors, x, t, config.lambda); };
  double current = exact(theta);
  {
    Vector flat = Eigen::Map<const Vector>(theta.data(), n * p);
    Vector grad;
    problem.smooth(flat, 0.0, grad);
    Vector candidate = flat - grad / run.lipschitz;
    problem.prox(candidate, 1.0 / run.lipschitz);
    const Matrix cand = Eigen::Map<const Matrix>(candidate.data(), n, p);
    const double value = exact(cand);
    if (value <= current) {
      theta = cand;
      current = value;
    }
  }
  detail::snap_residuals(theta, [&](Index j) { return projectors.apply(j, x.col(j) - theta.col(j)); }, exact);
  detail::sparsify_rows(theta, config.sparsity_floor, exact);
  current = exact(theta);
  if (!projectors.rank_deficient()) {
    Matrix b;
    Vector c;
    coefficients_given_theta(projectors, x, theta, b, c);
    std::vector<std::vector<Index>> free_b(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < p; ++k)
        if (k != j) free_b[static_cast<std::size_t>(j)].push_back(k);
    Matrix polished = theta;
    if (detail::newton_polish(x, b, c, polished, config.lambda, 0.0, config.fit_intercept, free_b)) {
      const double value = exact(polished);
      if (value <= current + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(current) &&
          detail::moderate_kkt(projectors, x, polished, config.lambda) <=
              detail::moderate_kkt(projectors, x, theta, config.lambda)) {
        theta = std::move(polished);
        current = value;
      }
    }
  }

  fit.theta_hat = theta * scale;
  coefficients_given_theta(projectors, x, theta, fit.b_hat, fit.c_hat);
  fit.c_hat *= scale;
  fit.objective_trace.reserve(run.trace.size() + 1);
  for (double v : run.trace) fit.objective_trace.push_back(v * scale);
  fit.objective_trace.push_back(current * scale);
  fit.objective = current * scale;
  fit.iterations = run.iterations;

  bool zero_residual = false;
  fit.kkt_residual = detail::moderate_kkt(projectors, x, theta, config.lambda, &zero_residual);
  if (projectors.rank_deficient() || zero_residual) {
    fit.status = SolverStatus::Degenerate;
  } else if (fit.kkt_residual <= config.tolerance_kkt) {
    fit.status = SolverStatus::Converged;
  } else {
    fit.status = SolverStatus::IterationBudget;
  }
  return fit;
}

inline FitRaw solve_highdim(const Matrix& xn, const SolverConfig& config) {
  config.validate();
  detail::check_finite(xn);
  detail::require(config.mode == SolverMode::HighDim, "solve_highdim requires HighDim mode");
  detail::require(config.lambda > 0.0, "lambda must be positive");
  const Index n = xn.rows();
  const Index p = xn.cols();
  detail::require(n >= 1 && p >= 1, "design must be nonempty");

  FitRaw fit;
  const double scale = detail::data_scale(xn);
  bool zero_column = false;
  for (Index j = 0; j < p; ++j) zero_column = zero_column || xn.col(j).cwiseAbs().maxCoeff() == 0.0;
  if (scale == 0.0) {
    fit.b_hat = Matrix::Identity(p, p);
    fit.theta_hat = Matrix::Zero(n, p);
    fit.c_hat = Vector::Zero(p);
    fit.objective_trace = {0.0};
    fit.status = SolverStatus::Degenerate;
    return fit;
  }
  const Matrix x = xn / scale;
  // The l1 penalty on B does not scale with the data: rescale its weight.
  const double b_penalty = config.lambda * config.gamma / scale;
  const detail::HighDimProblem problem(x, config.lambda, b_penalty, config.fit_intercept);

  const double root_n = std::sqrt(static_cast<double>(n));
  Vector c0 = Vector::Zero(p);
  if (config.fit_intercept) c0 = x.colwise().sum().transpose() / root_n;
  const Vector start = problem.pack(Matrix::Identity(p, p), c0, Matrix::Zero(n, p));
  ProxGradResult run = minimize_composite(problem, start, detail::engine_options(config));

  const double constant = config.penalize_diagonal ? config.lambda * config.gamma * static_cast<double>(p) : 0.0;
  const auto exact_flat = [&](const Vector& f) { return problem.smooth_value(f, 0.0) + problem.penalty(f); };
  Vector flat = run.x;
  double current = exact_flat(flat);
  {
    Vector grad;
    problem.smooth(flat, 0.0, grad);
    Vector candidate = flat - grad / run.lipschitz;
    problem.prox(candidate, 1.0 / run.lipschitz);
    const double value = exact_flat(candidate);
    if (value <= current) {
      flat = candidate;
      current = value;
    }
  }
  Matrix theta = problem.theta(flat);
  Matrix b = problem.b(flat);
  Vector c = problem.c(flat);
  {
    const auto exact_theta = [&](const Matrix& t) { return exact_flat(problem.pack(b, c, t)); };
    const Matrix fitted = (x * b).rowwise() - c.transpose() / root_n;
    detail::snap_residuals(theta, [&](Index j) { return Vector(fitted.col(j) - theta.col(j)); }, exact_theta);
    detail::sparsify_rows(theta, config.sparsity_floor, exact_theta);
  }
  flat = problem.pack(b, c, theta);
  current = exact_flat(flat);

  SolverConfig normalized = config;
  normalized.gamma = config.gamma / scale;
  {
    std::vector<std::vector<Index>> free_b(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j)
      for (Index k = 0; k < p; ++k)
        if (k != j && (b_penalty == 0.0 || b(k, j) != 0.0)) free_b[static_cast<std::size_t>(j)].push_back(k);
    Matrix pb = b, pt = theta;
    Vector pc = c;
    if (detail::newton_polish(x, pb, pc, pt, config.lambda, b_penalty, config.fit_intercept, free_b)) {
      const Vector candidate = problem.pack(pb, pc, pt);
      const double value = exact_flat(candidate);
      if (value <= current + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(current) &&
          detail::highdim_kkt(x, pb, pc, pt, normalized) <= detail::highdim_kkt(x, b, c, theta, normalized)) {
        b = std::move(pb);
        c = std::move(pc);
        theta = std::move(pt);
        current = value;
      }
    }
  }

  fit.b_hat = b;
  fit.c_hat = c * scale;
  fit.theta_hat = theta * scale;
  fit.objective_trace.reserve(run.trace.size() + 1);
  for (double v : run.trace) fit.objective_trace.push_back(v * scale + constant);
  fit.objective_trace.push_back(current * scale + constant);
  fit.objective = current * scale + constant;
  fit.iterations = run.iterations;

  bool zero_residual = false;
  fit.kkt_residual = detail::highdim_kkt(x, b, c, theta, normalized, &zero_residual);
  if (zero_column || zero_residual) {
    fit.status = SolverStatus::Degenerate;
  } else if (fit.kkt_residual <= config.tolerance_kkt) {
    fit.status = SolverStatus::Converged;
  } else {
    fit.status = SolverStatus::IterationBudget;
  }
  return fit;
}

inline FitRaw solve(const Matrix& xn, const SolverConfig& config) {
  return config.mode == SolverMode::Moderate ? solve_moderate(xn, config) : solve_highdim(xn, config);
}

}  // namespace robprec
