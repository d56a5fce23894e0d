#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "robprec/serialization.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace robprec;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd =
      std::string("'") + ROBPREC_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = io::read_text(out);
  r.err = io::read_text(err);
  return r;
}

std::string bytes(const fs::path& p) { return io::read_text(p); }

}  // namespace

TEST(Cli, Version) {
  const auto dir = test::scratch_dir("cli_version");
  const CliRun r = cli("--version", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(kGeneratorId), std::string::npos) << r.out;
}

TEST(Cli, UsageErrors) {
  const auto dir = test::scratch_dir("cli_usage");
  EXPECT_EQ(cli("", dir).code, 2);
  EXPECT_EQ(cli("frobnicate", dir).code, 2);
  EXPECT_EQ(cli("generate --out " + dir.string() + " --p notanumber", dir).code, 2);
  EXPECT_EQ(cli("generate --out " + dir.string() + " --model banded", dir).code, 2);
  EXPECT_EQ(cli("generate --p 5", dir).code, 2);
  const CliRun help = cli("fit --help", dir);
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("override"), std::string::npos);
}

TEST(Cli, GenerateWritesDatasetDeterministically) {
  const auto dir = test::scratch_dir("cli_generate");
  const std::string args = "generate --model toeplitz --p 5 --n 100 --epsilon 0.1 --seed 7 --out ";
  const CliRun a = cli(args + (dir / "a").string(), dir);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_FALSE(a.out.empty());
  ASSERT_TRUE(fs::exists(dir / "a" / "data.csv"));
  const Json truth = io::parse_json(bytes(dir / "a" / "truth.json"), "truth.json");
  EXPECT_EQ(truth.at("outlier_count").get<int>(), 10);
  EXPECT_EQ(truth.at("outliers").size(), 10u);
  ASSERT_EQ(cli(args + (dir / "b").string() + " --quiet", dir).code, 0);
  EXPECT_EQ(bytes(dir / "a" / "data.csv"), bytes(dir / "b" / "data.csv"));
  EXPECT_EQ(bytes(dir / "a" / "truth.json"), bytes(dir / "b" / "truth.json"));
}

TEST(Cli, GenerateRejectsEpsilonOne) {
  const auto dir = test::scratch_dir("cli_eps");
  const CliRun r = cli("generate --model toeplitz --p 5 --n 100 --epsilon 1.0 --out " + (dir / "x").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("epsilon must be < 1"), std::string::npos) << r.err;
}

TEST(Cli, QuietOnlyAffectsConsole) {
  const auto dir = test::scratch_dir("cli_quiet");
  const std::string args = "generate --model star --p 4 --n 30 --epsilon 0.1 --seed 3 --out ";
  ASSERT_EQ(cli(args + (dir / "a").string(), dir).code, 0);
  const CliRun q = cli(args + (dir / "b").string() + " --quiet", dir);
  ASSERT_EQ(q.code, 0);
  EXPECT_TRUE(q.out.empty());
  EXPECT_EQ(bytes(dir / "a" / "data.csv"), bytes(dir / "b" / "data.csv"));
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  const auto dir = test::scratch_dir("cli_config");
  io::write_text(dir / "gen.json", R"({"model": "equi", "p": 3, "n": 40, "epsilon": 0.25, "seed": 11})");
  ASSERT_EQ(cli("generate --config " + (dir / "gen.json").string() + " --out " + (dir / "a").string(), dir).code, 0);
  Json truth = io::parse_json(bytes(dir / "a" / "truth.json"), "truth.json");
  EXPECT_EQ(truth.at("outlier_count").get<int>(), 10);
  EXPECT_EQ(truth.at("p").get<int>(), 3);
  ASSERT_EQ(
      cli("generate --config " + (dir / "gen.json").string() + " --n 80 --out " + (dir / "b").string(), dir).code, 0);
  truth = io::parse_json(bytes(dir / "b" / "truth.json"), "truth.json");
  EXPECT_EQ(truth.at("n").get<int>(), 80);
  EXPECT_EQ(truth.at("outlier_count").get<int>(), 20);
  io::write_text(dir / "bad.json", R"({"colour": "blue"})");
  EXPECT_EQ(cli("generate --config " + (dir / "bad.json").string() + " --out " + (dir / "c").string(), dir).code, 2);
}

TEST(Cli, FitAutoLambda) {
  const auto dir = test::scratch_dir("cli_fit");
  ASSERT_EQ(cli("generate --model toeplitz --p 5 --n 100 --epsilon 0.1 --seed 7 --out " + (dir / "data").string(), dir)
                .code,
            0);
  const CliRun r = cli("fit --data " + (dir / "data" / "data.csv").string() +
                        " --mode moderate --lambda auto --delta 0.1 --out " + (dir / "fit").string(),
                    dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("kkt_residual="), std::string::npos);
  const Json s = io::parse_json(bytes(dir / "fit" / "summary.json"), "summary.json");
  EXPECT_NEAR(s.at("lambda").get<double>(), 4.0717, 5e-5);
  EXPECT_TRUE(fs::exists(dir / "fit" / "omega_hat.csv"));
  EXPECT_TRUE(fs::exists(dir / "fit" / "outliers.json"));
}

TEST(Cli, FitHighDimWithExplicitLambda) {
  const auto dir = test::scratch_dir("cli_fit_hd");
  ASSERT_EQ(cli("generate --model penta --p 6 --n 40 --epsilon 0.1 --seed 2 --out " + (dir / "data").string(), dir)
                .code,
            0);
  const CliRun r = cli("fit --data " + (dir / "data").string() + " --mode highdim --lambda 0.4 --gamma 0.5 --out " +
                        (dir / "fit").string(),
                    dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json s = io::parse_json(bytes(dir / "fit" / "summary.json"), "summary.json");
  EXPECT_EQ(s.at("mode").get<std::string>(), "highdim");
  EXPECT_EQ(s.at("gamma").get<double>(), 0.5);
  EXPECT_TRUE(s.at("fit_intercept").get<bool>());
}

TEST(Cli, FitErrors) {
  const auto dir = test::scratch_dir("cli_fit_err");
  EXPECT_EQ(cli("fit --data /nonexistent/data.csv --out " + (dir / "fit").string(), dir).code, 1);
  io::write_text(dir / "bad.csv", "0,1\n1.0,2.0\n3.0,x\n4.0,5.0\n");
  const CliRun bad = cli("fit --data " + (dir / "bad.csv").string() + " --out " + (dir / "fit").string(), dir);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("line 3"), std::string::npos) << bad.err;
  io::write_text(dir / "ok.csv", "1,2\n3,4\n5,7\n2,2\n");
  EXPECT_EQ(cli("fit --data " + (dir / "ok.csv").string() + " --lambda lots --out " + (dir / "fit").string(), dir).code,
            2);
  EXPECT_EQ(cli("fit --data " + (dir / "ok.csv").string() + " --mode sideways --out " + (dir / "fit").string(), dir)
                .code,
            2);
}

TEST(Cli, FitDegenerateExitsZeroWithFlag) {
  const auto dir = test::scratch_dir("cli_fit_deg");
  std::string csv;
  for (int i = 0; i < 12; ++i) {
    const double a = std::sin(1.3 * i), b = std::cos(0.7 * i + 0.2);
    csv += io::format_double(a) + "," + io::format_double(b) + "," + io::format_double(a + b) + "\n";
  }
  io::write_text(dir / "dep.csv", csv);
  const CliRun r = cli("fit --data " + (dir / "dep.csv").string() + " --lambda 1 --out " + (dir / "fit").string(), dir);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const Json s = io::parse_json(bytes(dir / "fit" / "summary.json"), "summary.json");
  EXPECT_TRUE(s.at("degenerate").get<bool>());
}

TEST(Cli, BenchmarkDeterministicAcrossJobs) {
  const auto dir = test::scratch_dir("cli_bench");
  io::write_text(dir / "s.json",
                 R"({"name": "t", "p": 3, "n": 60, "epsilon_grid": [0.05, 0.2], "replications": 3, "seed_base": 9})");
  const std::string base = "benchmark --scenario " + (dir / "s.json").string() + " --quiet";
  ASSERT_EQ(cli(base + " --jobs 1 --out " + (dir / "j1").string(), dir).code, 0);
  ASSERT_EQ(cli(base + " --jobs 8 --out " + (dir / "j8").string(), dir).code, 0);
  ASSERT_EQ(cli(base + " --jobs 1 --out " + (dir / "again").string(), dir).code, 0);
  for (const char* f : {"report.csv", "report.json"}) {
    EXPECT_EQ(bytes(dir / "j1" / f), bytes(dir / "j8" / f)) << f;
    EXPECT_EQ(bytes(dir / "j1" / f), bytes(dir / "again" / f)) << f;
  }
}

TEST(Cli, BenchmarkMinimalScenarioHasOneCell) {
  const auto dir = test::scratch_dir("cli_bench_min");
  io::write_text(dir / "s.json", R"({"p": 3, "n": 50, "epsilon_grid": [0.1], "estimators": ["NaiveMLE"]})");
  ASSERT_EQ(cli("benchmark --scenario " + (dir / "s.json").string() + " --out " + (dir / "r").string(), dir).code, 0);
  const std::string csv = bytes(dir / "r" / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Cli, BenchmarkRejectsInvalidScenario) {
  const auto dir = test::scratch_dir("cli_bench_bad");
  io::write_text(dir / "unknown.json", R"({"estimators": ["Our1", "GLASSO"]})");
  const CliRun r = cli("benchmark --scenario " + (dir / "unknown.json").string() + " --out " + (dir / "r").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("GLASSO"), std::string::npos) << r.err;
  io::write_text(dir / "broken.json", "{\"p\": ");
  EXPECT_EQ(cli("benchmark --scenario " + (dir / "broken.json").string() + " --out " + (dir / "r").string(), dir).code,
            2);
  EXPECT_EQ(cli("benchmark --scenario " + (dir / "missing.json").string() + " --out " + (dir / "r").string(), dir).code,
            2);
}

TEST(Cli, VerifyNoiseStatisticSuite) {
  const auto dir = test::scratch_dir("cli_verify");
  const CliRun r = cli("verify --suite lemma-stats --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 0) << r.err;
  const Json j = io::parse_json(bytes(dir / "lemma-stats.json"), "verify");
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_LE(j.at("checks").at(0).at("measured").at("frequency").get<double>(), 0.13);
  EXPECT_EQ(cli("verify --suite everything", dir).code, 2);
}

TEST(Cli, SampleScenarioRuns) {
  const auto dir = test::scratch_dir("cli_sample");
  const CliRun r = cli("benchmark --scenario " + (fs::path(ROBPREC_SAMPLES_DIR) / "scenario_small.json").string() +
                        " --jobs 2 --out " + (dir / "r").string(),
                    dir);
  EXPECT_EQ(r.code, 0) << r.err;
}
