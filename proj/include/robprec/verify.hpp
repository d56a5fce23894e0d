#pragma once

// Verification suites with pinned thresholds: solver against the subgradient
// oracle, the noise-statistic Monte-Carlo, cone membership and the Theta
// error rate in n.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "robprec/bench.hpp"
#include "robprec/diagnostics.hpp"
#include "robprec/metrics.hpp"
#include "robprec/model.hpp"
#include "robprec/sampling.hpp"
#include "robprec/serialization.hpp"
#include "robprec/solver.hpp"
#include "robprec/testing/subgradient_oracle.hpp"

namespace robprec::verify {

struct Check {
  std::string name;
  bool passed = false;
  Json measured;
};

struct SuiteResult {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  std::string first_failure() const {
    for (const auto& c : checks)
      if (!c.passed) return c.name;
    return {};
  }

  Json to_json() const {
    Json j;
    j["suite"] = suite;
    j["passed"] = passed();
    Json arr = Json::array();
    for (const auto& c : checks) {
      Json e;
      e["name"] = c.name;
      e["passed"] = c.passed;
      e["measured"] = c.measured;
      arr.push_back(std::move(e));
    }
    j["checks"] = std::move(arr);
    return j;
  }
};

struct OracleInstance {
  Matrix x;
  SolverConfig config;
};

/// 20 tiny instances: n <= 15, p <= 4, both modes, lambda in {0.2, 1, 5},
/// gamma in {0, 0.5}. Two rows are shifted so Theta is not trivially zero.
inline std::vector<OracleInstance> oracle_instances(std::uint64_t seed = 20160101) {
  static const std::pair<Index, Index> shapes[] = {{12, 3}, {10, 4}, {15, 2}, {8, 3}, {14, 4}};
  static const double lambdas[] = {0.2, 1.0, 5.0};
  std::vector<OracleInstance> out;
  for (int k = 0; k < 20; ++k) {
    const auto [n, p] = shapes[k % 5];
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j) x(i, j) = rng.normal();
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < p; ++j) x(i, j) += 4.0 * rng.normal();
    const double lambda = lambdas[k % 3];
    OracleInstance inst;
    inst.x = x;
    if (k % 2 == 0) {
      inst.config = SolverConfig::moderate(lambda);
    } else {
      inst.config = SolverConfig::highdim(lambda, (k / 2) % 2 == 0 ? 0.0 : 0.5);
      inst.config.fit_intercept = k % 4 == 1;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// (solver - oracle) / |oracle| <= 1e-6 on every instance.
inline SuiteResult solver_oracle(long oracle_iterations = 1000000, std::uint64_t seed = 20160101) {
  constexpr double kMaxGap = 1e-6;
  const auto start = std::chrono::steady_clock::now();
  SuiteResult r;
  r.suite = "solver-oracle";
  double worst = -std::numeric_limits<double>::infinity();
  Json per = Json::array();
  int k = 0;
  for (const auto& inst : oracle_instances(seed)) {
    const Matrix xn = scaled_design(inst.x);
    const FitRaw fit = solve(xn, inst.config);
    const auto oracle = testing::subgradient_oracle(xn, inst.config, oracle_iterations);
    const double gap = (fit.objective - oracle.objective) / std::abs(oracle.objective);
    worst = std::max(worst, gap);
    Json e;
    e["instance"] = k++;
    e["mode"] = std::string(to_string(inst.config.mode));
    e["n"] = inst.x.rows();
    e["p"] = inst.x.cols();
    e["lambda"] = inst.config.lambda;
    e["gamma"] = inst.config.gamma;
    e["solver"] = fit.objective;
    e["oracle"] = oracle.objective;
    e["relative_gap"] = gap;
    e["status"] = std::string(to_string(fit.status));
    per.push_back(std::move(e));
  }
  Check c;
  c.name = "max relative gap (solver - oracle) / |oracle| <= 1e-6";
  c.passed = worst <= kMaxGap;
  c.measured["max_relative_gap"] = worst;
  c.measured["instances"] = std::move(per);
  r.checks.push_back(std::move(c));
  r.seconds = detail::seconds_since(start);
  return r;
}

/// The lambda-condition statistic exceeds sqrt(4 log(2np/delta)/n) in at
/// most delta + 0.03 of the seeds. Toeplitz model, n = 200, p = 5, 5% replacement outliers.
inline SuiteResult lemma_stats(int seeds = 500, std::uint64_t seed = 12) {
  constexpr Index n = 200;
  constexpr Index p = 5;
  constexpr double delta = 0.1;
  constexpr double slack = 0.03;
  const auto start = std::chrono::steady_clock::now();
  const PrecisionModel model = make_model(ModelSpec(ModelVariant::Toeplitz06), p);
  const double threshold = std::sqrt(4.0 * std::log(2.0 * n * p / delta) / n);
  int violations = 0;
  double largest = 0.0;
  for (int s = 0; s < seeds; ++s) {
    ContaminationSpec spec;
    spec.epsilon = 0.05;
    spec.seed = derive_seed(seed, {static_cast<std::uint64_t>(s)});
    const auto d = generate_dataset(model, n, spec);
    const double stat = lambda_condition_statistic(scaled_design(d.x), d.noise);
    largest = std::max(largest, stat);
    if (stat > threshold) ++violations;
  }
  SuiteResult r;
  r.suite = "lemma-stats";
  Check c;
  c.name = "violation frequency <= delta + 0.03";
  const double freq = static_cast<double>(violations) / seeds;
  c.passed = freq <= delta + slack;
  c.measured["seeds"] = seeds;
  c.measured["threshold"] = threshold;
  c.measured["violations"] = violations;
  c.measured["frequency"] = freq;
  c.measured["max_statistic"] = largest;
  r.checks.push_back(std::move(c));
  r.seconds = detail::seconds_since(start);
  return r;
}

/// Theta_hat - Theta* lies in the cone in at least 1 - 3 delta of the runs.
/// Toeplitz model, n = 400, p = 5, eps = 5%, universal lambda with delta = 0.05.
inline SuiteResult cone(int replications = 200, std::uint64_t seed = 14) {
  constexpr Index n = 400;
  constexpr Index p = 5;
  constexpr double delta = 0.05;
  const auto start = std::chrono::steady_clock::now();
  const PrecisionModel model = make_model(ModelSpec(ModelVariant::Toeplitz06), p);
  const double lambda = universal_lambda_moderate(n, p, delta);
  SolverConfig config = SolverConfig::moderate(lambda);
  config.delta = delta;
  int inside = 0;
  int zero_fits = 0;
  for (int rep = 0; rep < replications; ++rep) {
    ContaminationSpec spec;
    spec.epsilon = 0.05;
    spec.seed = derive_seed(seed, {static_cast<std::uint64_t>(rep)});
    const auto d = generate_dataset(model, n, spec);
    const FitRaw fit = solve(scaled_design(d.x), config);
    if (cone_diagnostic(fit, d).in_cone) ++inside;
    if (fit.theta_hat.cwiseAbs().maxCoeff() == 0.0) ++zero_fits;
  }
  SuiteResult r;
  r.suite = "cone";
  Check c;
  c.name = "cone membership frequency >= 1 - 3 delta";
  const double freq = static_cast<double>(inside) / replications;
  c.passed = freq >= 1.0 - 3.0 * delta;
  c.measured["replications"] = replications;
  c.measured["lambda"] = lambda;
  c.measured["in_cone"] = inside;
  c.measured["frequency"] = freq;
  c.measured["fits_with_theta_zero"] = zero_fits;
  r.checks.push_back(std::move(c));
  r.seconds = detail::seconds_since(start);
  return r;
}

/// Slope of log mean ||Theta_hat - Theta*||_{2,2} against log n in
/// [-0.65, -0.35]. Toeplitz model, p = 5, |O| = 10, universal lambda with delta = 0.05.
inline SuiteResult rates(int replications = 30, std::uint64_t seed = 13) {
  constexpr Index p = 5;
  constexpr Index outliers = 10;
  constexpr double delta = 0.05;
  const std::vector<Index> sizes{250, 500, 1000, 2000};
  const auto start = std::chrono::steady_clock::now();
  const PrecisionModel model = make_model(ModelSpec(ModelVariant::Toeplitz06), p);
  std::vector<std::pair<double, double>> points;
  Json per = Json::array();
  int zero_fits = 0;
  for (Index n : sizes) {
    SolverConfig config = SolverConfig::moderate(universal_lambda_moderate(n, p, delta));
    config.delta = delta;
    double total = 0.0;
    for (int rep = 0; rep < replications; ++rep) {
      ContaminationSpec spec;
      spec.epsilon = static_cast<double>(outliers) / static_cast<double>(n);
      spec.seed = derive_seed(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
      const auto d = generate_dataset(model, n, spec);
      const FitRaw fit = solve(scaled_design(d.x), config);
      total += mixed_norm(fit.theta_hat - d.theta_star, 2, 2);
      if (fit.theta_hat.cwiseAbs().maxCoeff() == 0.0) ++zero_fits;
    }
    const double mean = total / replications;
    points.emplace_back(static_cast<double>(n), mean);
    Json e;
    e["n"] = n;
    e["lambda"] = config.lambda;
    e["mean_theta_err_22"] = mean;
    per.push_back(std::move(e));
  }
  const RateFit fit = rate_regression(points);
  SuiteResult r;
  r.suite = "rates";
  Check c;
  c.name = "log-log slope in [-0.65, -0.35]";
  c.passed = fit.slope >= -0.65 && fit.slope <= -0.35;
  c.measured["slope"] = fit.slope;
  c.measured["intercept"] = fit.intercept;
  c.measured["r2"] = fit.r2;
  c.measured["points"] = std::move(per);
  c.measured["fits_with_theta_zero"] = zero_fits;
  c.measured["fits"] = static_cast<int>(sizes.size()) * replications;
  r.checks.push_back(std::move(c));
  r.seconds = detail::seconds_since(start);
  return r;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"solver-oracle", "lemma-stats", "cone", "rates"};
  return names;
}

/// Runs a suite by name; `seed` replaces the suite's built-in seed.
inline SuiteResult run(const std::string& suite, std::optional<std::uint64_t> seed = std::nullopt) {
  if (suite == "solver-oracle") return seed ? solver_oracle(1000000, *seed) : solver_oracle();
  if (suite == "lemma-stats") return seed ? lemma_stats(500, *seed) : lemma_stats();
  if (suite == "cone") return seed ? cone(200, *seed) : cone();
  if (suite == "rates") return seed ? rates(30, *seed) : rates();
  throw InvalidArgument("unknown suite '" + suite + "'");
}

}  // namespace robprec::verify
