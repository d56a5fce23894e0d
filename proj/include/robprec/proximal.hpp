#pragma once

// Monotone accelerated proximal gradient (MFISTA) with backtracking and
// adaptive restart, run over a decreasing sequence of smoothing levels.
//
// A problem is a composite objective f_eps(x) + h(x) over a flat vector:
// f_eps is the smoothed, differentiable part and h has a cheap exact prox.
// Since f_eps is nondecreasing in eps, lowering eps between stages keeps the
// recorded objective sequence nonincreasing.
//
// curvature() bounds eps times the Lipschitz constant of grad f_eps. Once the
// backtracking estimate reaches that bound the step is accepted as is, since a
// failed sufficient-decrease test there can only come from rounding.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "robprec/linalg.hpp"

namespace robprec {

template <class P>
concept SmoothedCompositeProblem =
    requires(const P& problem, const Vector& x, Vector& grad, Vector& point, double eps, double step) {
      { problem.smooth(x, eps, grad) } -> std::convertible_to<double>;
      { problem.smooth_value(x, eps) } -> std::convertible_to<double>;
      { problem.penalty(x) } -> std::convertible_to<double>;
      problem.prox(point, step);
      { problem.stationarity(x, grad) } -> std::convertible_to<double>;
      { problem.curvature() } -> std::convertible_to<double>;
    };

struct ProxGradOptions {
  std::vector<double> schedule{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  long max_iterations = 50000;
  double tolerance_objective = 1e-9;
  double tolerance_kkt = 1e-6;
  double initial_lipschitz = 1.0;
  int check_every = 10;
};

struct ProxGradResult {
  Vector x;
  /// Composite objective of the incumbent after every iteration, evaluated at
  /// the smoothing level in force at that iteration.
  std::vector<double> trace;
  long iterations = 0;
  double lipschitz = 1.0;
  /// Stationarity at the end of the final stage (smoothed gradient).
  double stationarity = std::numeric_limits<double>::infinity();
  bool budget_exhausted = false;
};

template <SmoothedCompositeProblem P>
ProxGradResult minimize_composite(const P& problem, Vector x0, const ProxGradOptions& opt) {
  ProxGradResult out;
  out.x = std::move(x0);
  double lipschitz = opt.initial_lipschitz;
  Vector& x = out.x;
  Vector x_prev, y, z, grad_y, grad_x, step_point;

  for (std::size_t stage = 0; stage < opt.schedule.size(); ++stage) {
    const double eps = opt.schedule[stage];
    const bool final_stage = stage + 1 == opt.schedule.size();
    const double lipschitz_cap = problem.curvature() / eps;
    const double kkt_target = final_stage ? opt.tolerance_kkt : std::max(opt.tolerance_kkt, 10.0 * eps);

    lipschitz = std::min(lipschitz, lipschitz_cap);
    double fx = problem.smooth_value(x, eps) + problem.penalty(x);
    out.trace.push_back(fx);
    double f_at_check = fx;
    y = x;
    x_prev = x;
    double t = 1.0;
    long stage_iterations = 0;

    while (out.iterations < opt.max_iterations) {
      const double fy = problem.smooth(y, eps, grad_y);
      double fz = 0.0;
      for (int attempt = 0; attempt < 200; ++attempt) {
        z = y - grad_y / lipschitz;
        problem.prox(z, 1.0 / lipschitz);
        step_point = z - y;
        fz = problem.smooth_value(z, eps);
        const double model = fy + grad_y.dot(step_point) + 0.5 * lipschitz * step_point.squaredNorm();
        if (fz <= model + 1e-14 * std::abs(fy) || lipschitz >= lipschitz_cap) break;
        lipschitz = std::min(2.0 * lipschitz, lipschitz_cap);
      }
      const double composite_z = fz + problem.penalty(z);
      ++out.iterations;
      ++stage_iterations;

      x_prev = x;
      const bool descent = composite_z <= fx;
      if (descent) {
        x = z;
        fx = composite_z;
      }
      out.trace.push_back(fx);

      // Function- or gradient-based restart, otherwise the MFISTA extrapolation.
      const bool restart = !descent || (y - z).dot(z - x_prev) > 0.0;
      if (restart) {
        t = 1.0;
        y = x;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
        t = t_next;
      }
      lipschitz *= 0.9;

      if (stage_iterations % opt.check_every == 0) {
        problem.smooth(x, eps, grad_x);
        const double kkt = problem.stationarity(x, grad_x);
        const double rel_change = (f_at_check - fx) / std::max(std::abs(fx), 1e-300);
        f_at_check = fx;
        if (final_stage) out.stationarity = kkt;
        const bool objective_settled = !final_stage || rel_change <= opt.tolerance_objective;
        if (kkt <= kkt_target && objective_settled) break;
      }
    }
    if (out.iterations >= opt.max_iterations) {
      out.budget_exhausted = true;
      problem.smooth(x, opt.schedule.back(), grad_x);
      out.stationarity = problem.stationarity(x, grad_x);
      break;
    }
  }
  out.lipschitz = lipschitz;
  return out;
}

namespace prox {

/// Row-wise group soft-thresholding of an n x p block in place.
template <class Block>
void group_soft_threshold_rows(Block&& block, double threshold) {
  for (Index i = 0; i < block.rows(); ++i) {
    const double norm = block.row(i).norm();
    if (norm <= threshold) {
      block.row(i).setZero();
    } else {
      block.row(i) *= (1.0 - threshold / norm);
    }
  }
}

inline double soft_threshold(double v, double threshold) {
  if (v > threshold) return v - threshold;
  if (v < -threshold) return v + threshold;
  return 0.0;
}

}  // namespace prox
}  // namespace robprec
