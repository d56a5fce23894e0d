#pragma once

// Ground-truth Gaussian models: base matrices of the four benchmark
// structures, the unit-variance normalization of a precision matrix and the
// derived coefficient matrix B = Omega diag(Omega)^-1.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "robprec/errors.hpp"
#include "robprec/linalg.hpp"

namespace robprec {

enum class ModelVariant { Toeplitz06, Pentadiagonal, Star, Equicorrelation, Custom };

inline std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Toeplitz06: return "toeplitz";
    case ModelVariant::Pentadiagonal: return "penta";
    case ModelVariant::Star: return "star";
    case ModelVariant::Equicorrelation: return "equi";
    case ModelVariant::Custom: return "custom";
  }
  return "unknown";
}

inline ModelVariant parse_model_variant(std::string_view name) {
  if (name == "toeplitz") return ModelVariant::Toeplitz06;
  if (name == "penta") return ModelVariant::Pentadiagonal;
  if (name == "star") return ModelVariant::Star;
  if (name == "equi") return ModelVariant::Equicorrelation;
  if (name == "custom") return ModelVariant::Custom;
  throw InvalidArgument("unknown model variant '" + std::string(name) + "'");
}

/// Symmetry tolerance (absolute, on the largest entry deviation) for matrix inputs.
inline constexpr double kSymmetryTolerance = 1e-12;

/// Selects the base matrix A from which a precision matrix is normalized.
class ModelSpec {
 public:
  explicit ModelSpec(ModelVariant variant) : variant_(variant) {
    detail::require(variant != ModelVariant::Custom,
                    "custom model specs must be built with ModelSpec::custom");
  }

  /// Validates symmetry and positive semidefiniteness of `a`.
  static ModelSpec custom(const Matrix& a) {
    detail::require(a.rows() == a.cols() && a.rows() > 0, "custom matrix must be square and nonempty");
    detail::require(linalg::max_asymmetry(a) <= kSymmetryTolerance,
                    "custom matrix is not symmetric");
    const Matrix sym = linalg::symmetrize(a);
    const double lo = linalg::min_eigenvalue(sym);
    const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
    if (lo < -1e-12 * scale) {
      std::ostringstream msg;
      msg << "custom matrix is not positive semidefinite: smallest eigenvalue " << lo;
      throw InvalidArgument(msg.str());
    }
    ModelSpec spec;
    spec.variant_ = ModelVariant::Custom;
    spec.custom_ = sym;
    return spec;
  }

  ModelVariant variant() const { return variant_; }
  const std::optional<Matrix>& custom_matrix() const { return custom_; }

 private:
  ModelSpec() = default;
  ModelVariant variant_ = ModelVariant::Custom;
  std::optional<Matrix> custom_;
};

/// Ground-truth parameters of N_p(mu*, Sigma*). Immutable once built.
struct PrecisionModel {
  Index p = 0;
  Vector mu_star;
  Matrix omega_star;
  Matrix sigma_star;
  /// omega_star with every column divided by its diagonal entry.
  Matrix b_star;
  /// Conditional standard deviations (omega_jj)^(-1/2).
  Vector phi_star;
  std::string variant = "custom";
};

/// Base matrix A of the selected structure.
inline Matrix build_base_matrix(const ModelSpec& spec, Index p) {
  detail::require(p >= 2, "model dimension p must be at least 2");
  Matrix a = Matrix::Zero(p, p);
  switch (spec.variant()) {
    case ModelVariant::Toeplitz06:
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j) a(i, j) = std::pow(0.6, static_cast<double>(std::abs(i - j)));
      break;
    case ModelVariant::Pentadiagonal: {
      detail::require(p >= 3, "pentadiagonal model requires p >= 3");
      Matrix band = Matrix::Zero(p, p);
      for (Index i = 0; i < p; ++i) {
        band(i, i) = 1.0;
        if (i + 1 < p) band(i, i + 1) = band(i + 1, i) = -1.0 / 3.0;
        if (i + 2 < p) band(i, i + 2) = band(i + 2, i) = -1.0 / 10.0;
      }
      const Matrix inv = band.partialPivLu().inverse();
      for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j)
          if (std::abs(i - j) <= 2) a(i, j) = inv(i, j);
      a = linalg::symmetrize(a);
      const double lo = linalg::min_eigenvalue(a);
      if (!(lo > 0.0)) {
        std::ostringstream msg;
        msg << "truncated pentadiagonal base matrix is not positive definite (smallest eigenvalue "
            << lo << ")";
        throw NumericalError(msg.str());
      }
      break;
    }
    case ModelVariant::Star:
      a(0, 0) = static_cast<double>(p);
      for (Index i = 1; i < p; ++i) {
        a(i, i) = 2.0;
        a(0, i) = a(i, 0) = std::sqrt(2.0);
      }
      break;
    case ModelVariant::Equicorrelation:
      a.setConstant(0.5);
      a.diagonal().setOnes();
      break;
    case ModelVariant::Custom:
      detail::require(spec.custom_matrix().has_value() && spec.custom_matrix()->rows() == p,
                      "custom matrix dimension does not match p");
      a = *spec.custom_matrix();
      break;
  }
  return a;
}

/// B = Omega diag(Omega)^-1; the result has an exactly unit diagonal.
inline Matrix coefficient_matrix(const Matrix& omega) {
  detail::require(omega.rows() == omega.cols(), "precision matrix must be square");
  Matrix b(omega.rows(), omega.cols());
  for (Index j = 0; j < omega.cols(); ++j) {
    const double d = omega(j, j);
    if (d == 0.0) throw NumericalError("precision matrix has a zero diagonal entry");
    b.col(j) = omega.col(j) / d;
    b(j, j) = 1.0;
  }
  return b;
}

/// Wraps an SPD precision matrix (used as-is, no normalization) into a model.
inline PrecisionModel model_from_precision(const Matrix& omega, const Vector& mu = Vector(),
                                           std::string variant = "custom") {
  detail::require(omega.rows() == omega.cols() && omega.rows() > 0, "precision matrix must be square");
  detail::require(linalg::max_asymmetry(omega) <= kSymmetryTolerance, "precision matrix is not symmetric");
  const Index p = omega.rows();
  detail::require(mu.size() == 0 || mu.size() == p, "mean vector length does not match p");
  PrecisionModel m;
  m.p = p;
  m.variant = std::move(variant);
  m.omega_star = linalg::symmetrize(omega);
  Eigen::LLT<Matrix> llt(m.omega_star);
  if (llt.info() != Eigen::Success) throw NumericalError("precision matrix is not positive definite");
  m.sigma_star = linalg::symmetrize(llt.solve(Matrix::Identity(p, p)));
  m.b_star = coefficient_matrix(m.omega_star);
  m.phi_star = m.omega_star.diagonal().cwiseSqrt().cwiseInverse();
  m.mu_star = mu.size() == 0 ? Vector::Zero(p) : mu;
  return m;
}

/// Rescales `a` to Omega = D^{1/2} A D^{1/2}, D = diag(A^-1), so that the
/// implied covariance Omega^-1 has unit diagonal.
inline PrecisionModel normalize_precision(const Matrix& a, const Vector& mu = Vector(),
                                          std::string variant = "custom") {
  detail::require(a.rows() == a.cols() && a.rows() > 0, "matrix must be square and nonempty");
  detail::require(linalg::max_asymmetry(a) <= kSymmetryTolerance, "matrix is not symmetric");
  const Index p = a.rows();
  detail::require(mu.size() == 0 || mu.size() == p, "mean vector length does not match p");
  const Matrix sym = linalg::symmetrize(a);
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) throw NumericalError("matrix is singular or not positive definite");
  const Matrix a_inv = linalg::symmetrize(llt.solve(Matrix::Identity(p, p)));
  const Vector root = a_inv.diagonal().cwiseSqrt();

  PrecisionModel m;
  m.p = p;
  m.variant = std::move(variant);
  m.omega_star = linalg::symmetrize(root.asDiagonal() * sym * root.asDiagonal());
  // (D^{1/2} A D^{1/2})^-1 = D^{-1/2} A^-1 D^{-1/2}
  const Vector inv_root = root.cwiseInverse();
  m.sigma_star = linalg::symmetrize(inv_root.asDiagonal() * a_inv * inv_root.asDiagonal());
  m.b_star = coefficient_matrix(m.omega_star);
  m.phi_star = m.omega_star.diagonal().cwiseSqrt().cwiseInverse();
  m.mu_star = mu.size() == 0 ? Vector::Zero(p) : mu;
  return m;
}

inline PrecisionModel make_model(const ModelSpec& spec, Index p, const Vector& mu = Vector()) {
  return normalize_precision(build_base_matrix(spec, p), mu, std::string(to_string(spec.variant())));
}

}  // namespace robprec
