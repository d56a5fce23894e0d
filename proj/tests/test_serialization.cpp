#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "robprec/estimator.hpp"
#include "robprec/serialization.hpp"
#include "test_support.hpp"

using namespace robprec;

TEST(Csv, RoundTripIsExact) {
  Matrix m = test::gaussian_matrix(7, 3, 1);
  m(0, 0) = 1e-300;
  m(1, 2) = -0.0;
  const Matrix back = io::matrix_from_csv(io::matrix_to_csv(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(io::matrix_from_csv(io::matrix_to_csv(m, false)), m);
}

TEST(Csv, ReportsOffendingLine) {
  try {
    io::matrix_from_csv("0,1\n1.0,2.0\n3.0,abc\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(io::matrix_from_csv("1,2\n3\n"), ParseError);
  EXPECT_THROW(io::matrix_from_csv(""), ParseError);
}

TEST(Csv, MissingFile) {
  EXPECT_THROW(io::read_matrix_csv("/nonexistent/robprec/data.csv"), Error);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::parse_double(io::format_double(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(io::format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(ModelJson, RoundTrip) {
  const auto m = make_model(ModelSpec(ModelVariant::Pentadiagonal), 5);
  const auto back = model_from_json(model_to_json(m));
  EXPECT_EQ(back.omega_star, m.omega_star);
  EXPECT_EQ(back.variant, m.variant);
  EXPECT_LE((back.sigma_star - m.sigma_star).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DatasetFiles, WriteAndRead) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 4);
  ContaminationSpec spec;
  spec.epsilon = 0.1;
  spec.seed = 7;
  const auto d = generate_dataset(model, 50, spec);
  const auto dir = test::scratch_dir("dataset");
  write_dataset(dir, d, &model);
  const DatasetFiles f = read_dataset(dir);
  EXPECT_EQ(f.x, d.x);
  EXPECT_EQ(f.outliers, d.outliers);
  EXPECT_EQ(f.spec.seed, 7u);
  EXPECT_EQ(f.model_ref, "toeplitz:p=4");
  ASSERT_TRUE(f.model.has_value());
  EXPECT_EQ(f.model->omega_star, model.omega_star);
  const Json j = io::parse_json(io::read_text(dir / "truth.json"), "truth.json");
  EXPECT_EQ(j.at("outlier_count").get<int>(), 5);
  EXPECT_EQ(j.at("generator").get<std::string>(), kGeneratorId);
}

TEST(ConfigJson, RoundTripAndModeDefaults) {
  SolverConfig c = SolverConfig::highdim(0.7, 0.25);
  c.smoothing_schedule = {1e-2, 1e-4};
  const SolverConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(io::dump(config_to_json(back)), io::dump(config_to_json(c)));
  const SolverConfig h = config_from_json(io::parse_json(R"({"mode": "highdim"})", "c"));
  EXPECT_TRUE(h.fit_intercept);
  const SolverConfig m = config_from_json(io::parse_json(R"({"mode": "highdim", "fit_intercept": false})", "c"));
  EXPECT_FALSE(m.fit_intercept);
  EXPECT_THROW(config_from_json(io::parse_json(R"({"lambda": "big"})", "c")), ParseError);
}

TEST(FitExport, WritesEveryArtifact) {
  const auto model = make_model(ModelSpec(ModelVariant::Toeplitz06), 3);
  ContaminationSpec spec;
  spec.epsilon = 0.1;
  spec.seed = 9;
  const auto d = generate_dataset(model, 60, spec);
  FitOptions options;
  options.reestimate = true;
  const SolverConfig config = SolverConfig::moderate(0.8);
  const FitResult r = fit_pipeline(d.x, config, options);
  const auto dir = test::scratch_dir("fit_export");
  write_fit_result(dir, r, config);
  for (const char* name : {"b_hat.csv", "theta_hat.csv", "c_hat.csv", "fit.json", "omega_hat.csv", "omega_hat_pd.csv",
                           "e_hat.csv", "mu_hat.csv", "outliers.json", "omega_mle.csv", "mu_mle.csv", "summary.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  EXPECT_EQ(io::read_matrix_csv(dir / "theta_hat.csv"), r.raw.theta_hat);
  const Json s = io::parse_json(io::read_text(dir / "summary.json"), "summary.json");
  EXPECT_EQ(s.at("lambda").get<double>(), 0.8);
  EXPECT_EQ(s.at("outlier_count").get<std::size_t>(), r.outliers_hat.size());
}
