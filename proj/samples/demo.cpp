// Generates a contaminated Toeplitz sample, fits the moderate-dimension
// estimator and compares it with the plain Gaussian MLE.

#include <cstdio>

#include "robprec/bench.hpp"
#include "robprec/estimator.hpp"
#include "robprec/metrics.hpp"
#include "robprec/model.hpp"
#include "robprec/sampling.hpp"
#include "robprec/solver.hpp"

int main() {
  using namespace robprec;
  const Index n = 300;
  const Index p = 5;
  const PrecisionModel model = make_model(ModelSpec(ModelVariant::Toeplitz06), p);

  ContaminationSpec spec;
  spec.epsilon = 0.2;
  spec.seed = 2024;
  const ContaminatedDataset d = generate_dataset(model, n, spec);

  // Below the universal level, so that outlying rows are actually flagged.
  const Matrix xn = scaled_design(d.x);
  const double lambda = 0.5 * lambda_max_moderate(xn, false);
  FitOptions options;
  options.reestimate = true;
  const FitResult fit = fit_pipeline(d.x, SolverConfig::moderate(lambda), options);

  std::printf("n=%ld p=%ld true outliers=%zu flagged=%zu lambda=%.4f status=%s\n", static_cast<long>(n),
              static_cast<long>(p), d.outliers.size(), fit.outliers_hat.size(), lambda,
              std::string(to_string(fit.raw.status)).c_str());
  std::printf("Frobenius error  robust=%.4f  robust+MLE=%.4f  naive MLE=%.4f\n",
              frobenius_error(fit.omega_hat_pd, model.omega_star), frobenius_error(fit.mle->omega, model.omega_star),
              frobenius_error(repair_pd(naive_mle(d.x)), model.omega_star));
  return 0;
}
