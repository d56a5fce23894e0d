#pragma once

// Inlier generation, row contamination and the ground-truth corruption
// bookkeeping (E*, Theta*, noise, outlier set) used for evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"
#include "robprec/model.hpp"
#include "robprec/rng.hpp"

namespace robprec {

enum class ContaminationScheme {
  /// Outlier rows of X are fresh i.i.d. N(0, 1) entries.
  ReplaceStandardNormal,
  /// Outlier rows get an additive E* row with ||E*_i Sigma^{-1/2}||_2 = m_e sqrt(p).
  AdditiveBoundedRows,
};

inline std::string_view to_string(ContaminationScheme s) {
  return s == ContaminationScheme::ReplaceStandardNormal ? "replace" : "additive";
}

inline ContaminationScheme parse_contamination_scheme(std::string_view name) {
  if (name == "replace") return ContaminationScheme::ReplaceStandardNormal;
  if (name == "additive") return ContaminationScheme::AdditiveBoundedRows;
  throw InvalidArgument("unknown contamination scheme '" + std::string(name) + "'");
}

struct ContaminationSpec {
  double epsilon = 0.0;
  ContaminationScheme scheme = ContaminationScheme::ReplaceStandardNormal;
  /// Row-norm constant of the additive scheme.
  double m_e = 1.0;
  std::uint64_t seed = 0;
};

struct ContaminatedDataset {
  Matrix x;
  Matrix y;
  Matrix e_star;
  /// E* B* / sqrt(n).
  Matrix theta_star;
  /// (Y - 1 mu*^T) B* / sqrt(n).
  Matrix noise;
  IndexSet outliers;
  IndexSet inliers;
  std::string model_ref;
  ContaminationSpec spec;

  Index n() const { return x.rows(); }
  Index p() const { return x.cols(); }
};

/// round(epsilon * n), ties rounding up.
inline Index outlier_count(double epsilon, Index n) {
  detail::require(epsilon >= 0.0 && epsilon < 1.0, "epsilon must be in [0, 1)");
  const auto count = static_cast<Index>(std::floor(epsilon * static_cast<double>(n) + 0.5));
  detail::require(count < n, "epsilon * n must be below n");
  return count;
}

inline std::string model_ref(const PrecisionModel& model) {
  return model.variant + ":p=" + std::to_string(model.p);
}

/// X^(n) = X / sqrt(n).
inline Matrix scaled_design(const Matrix& x) {
  detail::require(x.rows() >= 1, "design must have at least one row");
  return x / std::sqrt(static_cast<double>(x.rows()));
}

/// n i.i.d. rows of N(mu*, Sigma*) as Z L^T + 1 mu*^T, L the Cholesky factor of Sigma*.
inline Matrix sample_inliers(const PrecisionModel& model, Index n, std::uint64_t seed) {
  detail::require(n >= 1, "sample size n must be positive");
  Eigen::LLT<Matrix> llt(model.sigma_star);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance is not positive definite");
  const Matrix lower = llt.matrixL();
  Rng rng(seed);
  Matrix z(n, model.p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < model.p; ++j) z(i, j) = rng.normal();
  Matrix y = z * lower.transpose();
  y.rowwise() += model.mu_star.transpose();
  return y;
}

namespace detail {

/// Simple random sample of `k` indices from [0, n), returned sorted.
inline IndexSet sample_without_replacement(Index n, Index k, Rng& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  IndexSet out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

inline Matrix symmetric_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

inline ContaminatedDataset contaminate(const Matrix& y, const PrecisionModel& model,
                                       const ContaminationSpec& spec) {
  detail::require(y.rows() >= 2, "contamination needs at least two rows");
  detail::require(y.cols() == model.p, "data dimension does not match the model");
  const Index n = y.rows();
  const Index p = y.cols();
  const Index count = outlier_count(spec.epsilon, n);
  if (spec.scheme == ContaminationScheme::AdditiveBoundedRows)
    detail::require(spec.m_e > 0.0, "m_e must be positive");

  Rng rng(derive_seed(spec.seed, {0xC0FFEEULL}));
  ContaminatedDataset d;
  d.spec = spec;
  d.model_ref = model_ref(model);
  d.y = y;
  d.outliers = detail::sample_without_replacement(n, count, rng);
  d.inliers = linalg::complement(d.outliers, n);
  d.e_star = Matrix::Zero(n, p);

  if (spec.scheme == ContaminationScheme::ReplaceStandardNormal) {
    for (Index i : d.outliers) {
      for (Index j = 0; j < p; ++j) d.e_star(i, j) = rng.normal() - y(i, j);
    }
  } else {
    const Matrix sigma_root = detail::symmetric_sqrt(model.sigma_star);
    const double radius = spec.m_e * std::sqrt(static_cast<double>(p));
    for (Index i : d.outliers) {
      Vector g(p);
      for (Index j = 0; j < p; ++j) g(j) = rng.normal();
      g *= radius / g.norm();
      d.e_star.row(i) = g.transpose() * sigma_root;
    }
  }

  d.x = d.y + d.e_star;
  const double root_n = std::sqrt(static_cast<double>(n));
  d.theta_star = d.e_star * model.b_star / root_n;
  d.noise = (d.y.rowwise() - model.mu_star.transpose()) * model.b_star / root_n;
  return d;
}

/// Inliers and contamination drawn from independent streams derived from spec.seed.
inline ContaminatedDataset generate_dataset(const PrecisionModel& model, Index n,
                                            const ContaminationSpec& spec) {
  const Matrix y = sample_inliers(model, n, derive_seed(spec.seed, {0x1A11E5ULL}));
  return contaminate(y, model, spec);
}

}  // namespace robprec
