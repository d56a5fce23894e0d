#include <gtest/gtest.h>

#include <cmath>

#include "robprec/bench.hpp"
#include "robprec/estimator.hpp"
#include "test_support.hpp"

using namespace robprec;

namespace {

Scenario tiny_scenario() {
  Scenario s;
  s.name = "tiny";
  s.p = 3;
  s.n = 60;
  s.epsilon_grid = {0.1};
  s.replications = 1;
  s.seed_base = 5;
  return s;
}

}  // namespace

TEST(NaiveMle, HandExample) {
  Matrix x(2, 2);
  x << 1, 0, -1, 0;
  Matrix expected(2, 2);
  expected << 1, 0, 0, 0;
  EXPECT_LE((naive_mle(x) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NaiveMle, CleanLargeSampleNearIdentity) {
  const auto model = normalize_precision(Matrix::Identity(5, 5));
  const Matrix y = sample_inliers(model, 2000, 4);
  EXPECT_LE((naive_mle(y) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 0.2);
}

TEST(NaiveMle, InvariantToRowDuplication) {
  const Matrix x = test::gaussian_matrix(30, 3, 5);
  Matrix twice(60, 3);
  twice << x, x;
  EXPECT_LE((naive_mle(x) - naive_mle(twice)).norm(), 1e-10);
}

TEST(EstimatorNames, RoundTripAndRejectUnknown) {
  for (auto e : {EstimatorKind::Our1, EstimatorKind::Our2, EstimatorKind::NaiveMLE})
    EXPECT_EQ(parse_estimator(to_string(e)), e);
  EXPECT_THROW(parse_estimator("CLIME"), InvalidArgument);
}

TEST(LambdaGrids, Shapes) {
  const auto g = default_lambda_grid(2.0, 8);
  ASSERT_EQ(g.size(), 8u);
  EXPECT_NEAR(g.front(), 0.25, 1e-12);
  EXPECT_NEAR(g.back(), 16.0, 1e-12);
  for (std::size_t k = 1; k < g.size(); ++k) EXPECT_NEAR(g[k] / g[k - 1], g[1] / g[0], 1e-12);
  const auto m = default_lambda_grid_moderate(3.0, 16);
  EXPECT_NEAR(m.front(), 3.0, 1e-12);
  EXPECT_NEAR(m.back(), 0.75, 1e-12);
}

TEST(OracleTune, SingletonGrid) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 3);
  ContaminationSpec spec;
  spec.epsilon = 0.1;
  spec.seed = 3;
  const auto d = generate_dataset(model, 80, spec);
  const TuneResult t = oracle_tune(d, {0.7}, {0.0}, model, EstimatorKind::Our1, SolverMode::Moderate, 0.05);
  EXPECT_EQ(t.lambda, 0.7);
  EXPECT_EQ(t.gamma, 0.0);
  const FitResult r = fit_pipeline(d.x, SolverConfig::moderate(0.7));
  EXPECT_NEAR(t.error, frobenius_error(r.omega_hat_pd, model.omega_star), 1e-12);
}

TEST(OracleTune, ReturnsGridMinimum) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 3);
  ContaminationSpec spec;
  spec.epsilon = 0.2;
  spec.seed = 4;
  const auto d = generate_dataset(model, 80, spec);
  const auto grid = default_lambda_grid_moderate(lambda_max_moderate(scaled_design(d.x), false), 8);
  const TuneResult t = oracle_tune(d, grid, {0.0}, model, EstimatorKind::Our1, SolverMode::Moderate, 0.05);
  for (double lambda : grid) {
    try {
      const FitResult r = fit_pipeline(d.x, SolverConfig::moderate(lambda));
      EXPECT_LE(t.error, frobenius_error(r.omega_hat_pd, model.omega_star) + 1e-12);
    } catch (const NumericalError&) {
    }
  }
  EXPECT_THROW(oracle_tune(d, grid, {0.0}, model, EstimatorKind::NaiveMLE, SolverMode::Moderate, 0.05),
               InvalidArgument);
}

// Where the error-optimal lambda sits relative to the universal one, on the
// universal-centred grid [lambda_u / 8, 8 lambda_u].
TEST(OracleTune, OracleLambdaNearUniversal) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 5);
  const Index n = 300;
  const double universal = universal_lambda_moderate(n, 5, 0.05);
  const auto grid = default_lambda_grid(universal, 8);
  int near = 0;
  for (int s = 0; s < 20; ++s) {
    ContaminationSpec spec;
    spec.epsilon = 0.1;
    spec.seed = derive_seed(41, {static_cast<std::uint64_t>(s)});
    const auto d = generate_dataset(model, n, spec);
    const TuneResult t = oracle_tune(d, grid, {0.0}, model, EstimatorKind::Our1, SolverMode::Moderate, 0.05);
    if (t.lambda >= universal / 4.0 && t.lambda <= 4.0 * universal) ++near;
  }
  EXPECT_GE(near, 12) << "oracle lambda within a factor 4 of the universal value in " << near << " of 20 seeds";
}

TEST(ClassifyOutliers, RecallAtOracleLambda) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 5);
  const Index n = 400;
  double recall = 0.0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    ContaminationSpec spec;
    spec.epsilon = 0.1;
    spec.seed = derive_seed(42, {static_cast<std::uint64_t>(s)});
    const auto d = generate_dataset(model, n, spec);
    const auto grid = default_lambda_grid_moderate(lambda_max_moderate(scaled_design(d.x), false), 16);
    const TuneResult t = oracle_tune(d, grid, {0.0}, model, EstimatorKind::Our1, SolverMode::Moderate, 0.05);
    const FitResult r = fit_pipeline(d.x, SolverConfig::moderate(t.lambda));
    int hit = 0;
    for (Index i : d.outliers)
      if (std::binary_search(r.outliers_hat.begin(), r.outliers_hat.end(), i)) ++hit;
    recall += static_cast<double>(hit) / static_cast<double>(d.outliers.size());
  }
  EXPECT_GE(recall / seeds, 0.8);
}

TEST(RunScenario, SingleCell) {
  Scenario s = tiny_scenario();
  s.estimators = {EstimatorKind::Our1};
  const auto report = run_scenario(s);
  ASSERT_EQ(report.records.size(), 1u);
  ASSERT_EQ(report.summary.size(), 1u);
  EXPECT_FALSE(report.records[0].failed) << report.records[0].failure;
  EXPECT_TRUE(validate_report(report).empty());
}

TEST(RunScenario, NaiveMleDegradesWithContamination) {
  Scenario s;
  s.p = 10;
  s.n = 300;
  s.epsilon_grid = {0.05, 0.30};
  s.replications = 20;
  s.estimators = {EstimatorKind::NaiveMLE};
  const auto report = run_scenario(s);
  EXPECT_GE(report.aggregate(EstimatorKind::NaiveMLE, 0.30).mean_frob,
            report.aggregate(EstimatorKind::NaiveMLE, 0.05).mean_frob);
}

TEST(RunScenario, DeterministicAndJobIndependent) {
  Scenario s = tiny_scenario();
  s.epsilon_grid = {0.05, 0.2};
  s.replications = 3;
  const auto a = run_scenario(s, 1);
  const auto b = run_scenario(s, 1);
  const auto c = run_scenario(s, 4);
  EXPECT_EQ(report_csv(a), report_csv(b));
  EXPECT_EQ(report_csv(a), report_csv(c));
  EXPECT_EQ(io::dump(report_json(a)), io::dump(report_json(c)));
  EXPECT_TRUE(validate_report(a).empty());
  EXPECT_EQ(a.records.size(), 2u * 3u * 3u);
}

TEST(RunScenario, CellSeedsAreDistinct) {
  const Scenario s = tiny_scenario();
  EXPECT_NE(cell_seed(s, 0, 0), cell_seed(s, 0, 1));
  EXPECT_NE(cell_seed(s, 0, 0), cell_seed(s, 1, 0));
}

TEST(RateRegression, ExactPowerLaw) {
  std::vector<std::pair<double, double>> pts;
  for (double n : {250.0, 500.0, 1000.0, 2000.0}) pts.emplace_back(n, 3.0 / std::sqrt(n));
  const RateFit f = rate_regression(pts);
  EXPECT_NEAR(f.slope, -0.5, 1e-10);
  EXPECT_NEAR(f.r2, 1.0, 1e-10);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-10);
}

TEST(RateRegression, ConstantErrors) {
  std::vector<std::pair<double, double>> pts;
  for (double n : {10.0, 20.0, 40.0, 80.0}) pts.emplace_back(n, 0.7);
  EXPECT_NEAR(rate_regression(pts).slope, 0.0, 1e-14);
}

TEST(RateRegression, NeedsFourSizes) {
  EXPECT_THROW(rate_regression({{10.0, 1.0}, {20.0, 0.5}, {40.0, 0.3}}), InvalidArgument);
  const RateFit f = rate_regression({{10.0, 1.0}, {20.0, 0.5}, {40.0, 0.3}, {80.0, 0.2}, {160.0, 0.0}});
  EXPECT_EQ(f.excluded, 1u);
  EXPECT_EQ(f.used, 4u);
}

TEST(ScenarioJson, RoundTripAndValidation) {
  Scenario s = tiny_scenario();
  s.lambda_grid = {0.5, 1.0};
  const Scenario t = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(io::dump(scenario_to_json(s)), io::dump(scenario_to_json(t)));
  EXPECT_THROW(scenario_from_json(io::parse_json(R"({"estimators": ["SMCD"]})", "s")), InvalidArgument);
  EXPECT_THROW(scenario_from_json(io::parse_json(R"({"reps": 3})", "s")), InvalidArgument);
  EXPECT_THROW(scenario_from_json(io::parse_json(R"({"n": 4, "p": 5})", "s")), InvalidArgument);
  EXPECT_THROW(scenario_from_json(io::parse_json(R"({"model": "custom"})", "s")), InvalidArgument);
}

TEST(ReportCsv, HeaderColumns) {
  Scenario s = tiny_scenario();
  s.estimators = {EstimatorKind::NaiveMLE};
  const std::string csv = report_csv(run_scenario(s));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "model,p,n,epsilon,estimator,replication,lambda,gamma,frob_error,theta_err_11,theta_err_21,"
            "theta_err_22,runtime_ms");
}
