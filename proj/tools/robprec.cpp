// robprec command-line tool: generate, fit, benchmark, verify.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "robprec/bench.hpp"
#include "robprec/estimator.hpp"
#include "robprec/model.hpp"
#include "robprec/rng.hpp"
#include "robprec/sampling.hpp"
#include "robprec/serialization.hpp"
#include "robprec/solver.hpp"
#include "robprec/verify.hpp"
#include "robprec/version.hpp"

namespace fs = std::filesystem;
using namespace robprec;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsage = 2;

/// Bad flags or configuration; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config_path;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  c.seed_opt = cmd->add_option("--seed", c.seed, "Random seed");
  c.out_opt = cmd->add_option("--out", c.out, "Output directory (created if absent)");
  cmd->add_option("--config", c.config_path,
                  "JSON object of option values (keys are long flag names with '_' for '-'); "
                  "flags given on the command line override it");
  cmd->add_flag("--quiet", c.quiet, "Suppress console output; files are unaffected");
}

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  Json j;
  try {
    j = io::parse_json(io::read_text(path), path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must be a JSON object");
  return j;
}

void reject_unknown(const Json& cfg, const std::set<std::string>& allowed) {
  for (const auto& item : cfg.items())
    if (!allowed.count(item.key())) throw UsageError("config: unknown key '" + item.key() + "'");
}

/// Takes `key` from the config unless the flag was given.
template <class T>
void merge(const Json& cfg, const CLI::Option* opt, const std::string& key, T& target) {
  if (opt->count() > 0 || !cfg.contains(key)) return;
  try {
    target = cfg.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config key '" + key + "': " + e.what());
  }
}

void merge_common(const Json& cfg, Common& c, bool out_required) {
  merge(cfg, c.out_opt, "out", c.out);
  if (out_required && c.out.empty()) throw UsageError("--out is required");
  if (c.seed_opt->count() > 0 || !cfg.contains("seed")) return;
  try {
    c.seed = cfg.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config key 'seed': ") + e.what());
  }
}

// generate

struct GenerateArgs {
  Common common;
  std::string model = "toeplitz";
  std::string matrix;
  Index p = 5;
  Index n = 100;
  double epsilon = 0.0;
  std::string scheme = "replace";
  double m_e = 1.0;
  CLI::Option *model_opt, *matrix_opt, *p_opt, *n_opt, *epsilon_opt, *scheme_opt, *m_e_opt;
};

void setup_generate(CLI::App& app, GenerateArgs& a) {
  auto* cmd = app.add_subcommand("generate", "Sample a contaminated dataset from a precision model");
  add_common(cmd, a.common);
  a.model_opt = cmd->add_option("--model", a.model, "toeplitz|penta|star|equi|custom");
  a.matrix_opt = cmd->add_option("--matrix", a.matrix, "CSV of the base matrix for --model custom");
  a.p_opt = cmd->add_option("--p", a.p, "Dimension");
  a.n_opt = cmd->add_option("--n", a.n, "Number of samples");
  a.epsilon_opt = cmd->add_option("--epsilon", a.epsilon, "Fraction of outliers, in [0, 1)");
  a.scheme_opt = cmd->add_option("--scheme", a.scheme, "replace|additive");
  a.m_e_opt = cmd->add_option("--m-e", a.m_e, "Row-norm constant of the additive scheme");
}

int run_generate(GenerateArgs& a) {
  const Json cfg = load_config(a.common.config_path);
  reject_unknown(cfg, {"model", "matrix", "p", "n", "epsilon", "scheme", "m_e", "seed", "out"});
  merge(cfg, a.model_opt, "model", a.model);
  merge(cfg, a.matrix_opt, "matrix", a.matrix);
  merge(cfg, a.p_opt, "p", a.p);
  merge(cfg, a.n_opt, "n", a.n);
  merge(cfg, a.epsilon_opt, "epsilon", a.epsilon);
  merge(cfg, a.scheme_opt, "scheme", a.scheme);
  merge(cfg, a.m_e_opt, "m_e", a.m_e);
  merge_common(cfg, a.common, true);

  if (!(a.epsilon >= 0.0)) throw UsageError("epsilon must be >= 0");
  if (a.epsilon >= 1.0) throw UsageError("epsilon must be < 1");
  if (a.n < 1) throw UsageError("n must be positive");

  PrecisionModel model;
  ContaminationSpec spec;
  try {
    const ModelVariant variant = parse_model_variant(a.model);
    if (variant == ModelVariant::Custom) {
      if (a.matrix.empty()) throw UsageError("--model custom needs --matrix");
      model = normalize_precision(io::read_matrix_csv(a.matrix));
    } else {
      model = make_model(ModelSpec(variant), a.p);
    }
    spec.epsilon = a.epsilon;
    spec.scheme = parse_contamination_scheme(a.scheme);
    spec.m_e = a.m_e;
    spec.seed = a.common.seed.value_or(0);
    outlier_count(spec.epsilon, a.n);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const ContaminatedDataset d = generate_dataset(model, a.n, spec);
  write_dataset(a.common.out, d, &model);
  if (!a.common.quiet)
    std::cout << "wrote " << (fs::path(a.common.out) / "data.csv").string() << ": n=" << d.n() << " p=" << d.p()
              << " outliers=" << d.outliers.size() << " model=" << d.model_ref << "\n";
  return kOk;
}

// fit

struct FitArgs {
  Common common;
  std::string data;
  std::string mode = "moderate";
  std::string lambda = "auto";
  double gamma = 0.0;
  double delta = 0.05;
  Index outlier_budget = 0;
  bool reestimate = false;
  CLI::Option *data_opt, *mode_opt, *lambda_opt, *gamma_opt, *delta_opt, *budget_opt, *reestimate_opt;
};

void setup_fit(CLI::App& app, FitArgs& a) {
  auto* cmd = app.add_subcommand("fit", "Fit the robust precision estimator to a data matrix");
  add_common(cmd, a.common);
  a.data_opt = cmd->add_option("--data", a.data, "Data CSV (or a directory holding data.csv)");
  a.mode_opt = cmd->add_option("--mode", a.mode, "moderate|highdim");
  a.lambda_opt = cmd->add_option("--lambda", a.lambda, "Penalty level, or 'auto' for the universal choice");
  a.gamma_opt = cmd->add_option("--gamma", a.gamma, "Relative weight of the l1 penalty on B (highdim)");
  a.delta_opt = cmd->add_option("--delta", a.delta, "Confidence parameter of --lambda auto");
  a.budget_opt = cmd->add_option("--outlier-budget", a.outlier_budget,
                                 "Assumed number of outliers in the highdim auto lambda");
  a.reestimate_opt = cmd->add_flag("--reestimate", a.reestimate, "Also re-estimate by MLE on the detected inliers");
}

void print_fit(const FitRaw& raw, std::size_t outliers, const SolverConfig& config) {
  std::cout << "objective=" << io::format_double(raw.objective) << " outliers=" << outliers
            << " kkt_residual=" << io::format_double(raw.kkt_residual) << " lambda=" << io::format_double(config.lambda)
            << " status=" << to_string(raw.status) << "\n";
}

int run_fit(FitArgs& a) {
  const Json cfg = load_config(a.common.config_path);
  std::set<std::string> allowed{"data", "mode", "lambda", "gamma", "delta", "outlier_budget",
                                "reestimate", "seed", "out"};
  const Json solver_defaults = config_to_json(SolverConfig{});
  for (const auto& item : solver_defaults.items()) allowed.insert(item.key());
  reject_unknown(cfg, allowed);
  merge(cfg, a.data_opt, "data", a.data);
  merge(cfg, a.mode_opt, "mode", a.mode);
  if (a.lambda_opt->count() == 0 && cfg.contains("lambda")) {
    const Json& l = cfg.at("lambda");
    if (l.is_number()) {
      a.lambda = io::format_double(l.get<double>());
    } else if (l.is_string()) {
      a.lambda = l.get<std::string>();
    } else {
      throw UsageError("config key 'lambda' must be a number or \"auto\"");
    }
  }
  merge(cfg, a.gamma_opt, "gamma", a.gamma);
  merge(cfg, a.delta_opt, "delta", a.delta);
  merge(cfg, a.budget_opt, "outlier_budget", a.outlier_budget);
  merge(cfg, a.reestimate_opt, "reestimate", a.reestimate);
  merge_common(cfg, a.common, true);
  if (a.data.empty()) throw UsageError("--data is required");

  SolverConfig config;
  try {
    const SolverMode mode = parse_solver_mode(a.mode);
    config = mode == SolverMode::Moderate ? SolverConfig::moderate(1.0) : SolverConfig::highdim(1.0, 0.0);
    Json solver_keys = cfg;
    for (const char* k : {"data", "mode", "lambda", "gamma", "delta", "outlier_budget", "reestimate", "seed", "out"})
      solver_keys.erase(k);
    config = config_from_json(solver_keys, config);
    config.gamma = a.gamma;
    config.delta = a.delta;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const bool auto_lambda = a.lambda == "auto";
  if (!auto_lambda) {
    try {
      config.lambda = io::parse_double(a.lambda);
    } catch (const Error&) {
      throw UsageError("--lambda must be a number or 'auto', got '" + a.lambda + "'");
    }
  }

  fs::path data_path = a.data;
  if (fs::is_directory(data_path)) data_path /= "data.csv";
  const Matrix x = io::read_matrix_csv(data_path);

  try {
    if (auto_lambda)
      config.lambda = config.mode == SolverMode::Moderate
                          ? universal_lambda_moderate(x.rows(), x.cols(), config.delta)
                          : universal_lambda_highdim(x.rows(), x.cols(), config.delta, a.outlier_budget);
    config.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  FitOptions options;
  options.reestimate = a.reestimate;
  FitRaw raw = solve(scaled_design(x), config);
  if (raw.status == SolverStatus::Degenerate) {
    try {
      const FitResult r = complete_fit(x, raw, config, options);
      write_fit_result(a.common.out, r, config);
      if (!a.common.quiet) print_fit(r.raw, r.outliers_hat.size(), config);
      std::cerr << "warning: degenerate fit; see summary.json\n";
    } catch (const NumericalError& e) {
      write_fit_raw(a.common.out, raw);
      io::write_text(fs::path(a.common.out) / "summary.json", io::dump(degenerate_fit_summary(raw, config, e.what())));
      std::cerr << "warning: degenerate fit, estimates not formed: " << e.what() << "\n";
    }
    return kOk;
  }
  const FitResult r = complete_fit(x, std::move(raw), config, options);
  write_fit_result(a.common.out, r, config);
  if (!a.common.quiet) print_fit(r.raw, r.outliers_hat.size(), config);
  return kOk;
}

// benchmark

struct BenchmarkArgs {
  Common common;
  std::string scenario;
  int jobs = 1;
  CLI::Option *scenario_opt, *jobs_opt;
};

void setup_benchmark(CLI::App& app, BenchmarkArgs& a) {
  auto* cmd = app.add_subcommand("benchmark", "Run a benchmark scenario and write report.csv and report.json");
  add_common(cmd, a.common);
  a.scenario_opt = cmd->add_option("--scenario", a.scenario, "Scenario JSON file");
  a.jobs_opt = cmd->add_option("--jobs", a.jobs, "Worker threads; the report does not depend on it");
}

int run_benchmark(BenchmarkArgs& a) {
  const Json cfg = load_config(a.common.config_path);
  reject_unknown(cfg, {"scenario", "jobs", "seed", "out"});
  merge(cfg, a.scenario_opt, "scenario", a.scenario);
  merge(cfg, a.jobs_opt, "jobs", a.jobs);
  merge_common(cfg, a.common, true);
  if (a.scenario.empty()) throw UsageError("--scenario is required");
  if (a.jobs < 1) throw UsageError("--jobs must be at least 1");

  Scenario s;
  try {
    s = scenario_from_json(io::parse_json(io::read_text(a.scenario), a.scenario));
    if (a.common.seed) s.seed_base = *a.common.seed;
  } catch (const Error& e) {
    throw UsageError(std::string("invalid scenario: ") + e.what());
  }

  const BenchmarkReport report = run_scenario(s, a.jobs);
  write_report(a.common.out, report);
  const auto problems = validate_report(report);
  for (const auto& p : problems) std::cerr << "report check failed: " << p << "\n";
  if (!a.common.quiet) {
    for (const auto& g : report.summary)
      std::cout << to_string(g.estimator) << " eps=" << io::format_double(g.epsilon) << " count=" << g.count
                << " failed=" << g.failed << " mean_frob=" << io::format_double(g.count ? g.mean_frob : NAN) << "\n";
  }
  return problems.empty() ? kOk : kRuntimeFailure;
}

// verify

struct VerifyArgs {
  Common common;
  std::string suite;
  CLI::Option* suite_opt;
};

void setup_verify(CLI::App& app, VerifyArgs& a) {
  auto* cmd = app.add_subcommand("verify", "Run a verification suite; exit 0 iff every check passes");
  add_common(cmd, a.common);
  a.suite_opt = cmd->add_option("--suite", a.suite, "solver-oracle|lemma-stats|cone|rates");
}

int run_verify(VerifyArgs& a) {
  const Json cfg = load_config(a.common.config_path);
  reject_unknown(cfg, {"suite", "seed", "out"});
  merge(cfg, a.suite_opt, "suite", a.suite);
  merge_common(cfg, a.common, false);
  const auto& names = verify::suite_names();
  if (std::find(names.begin(), names.end(), a.suite) == names.end())
    throw UsageError("--suite must be one of solver-oracle|lemma-stats|cone|rates");

  const verify::SuiteResult r = verify::run(a.suite, a.common.seed);
  Json j = r.to_json();
  if (!a.common.out.empty()) io::write_text(fs::path(a.common.out) / (a.suite + ".json"), io::dump(j));
  if (!a.common.quiet)
    for (const auto& c : r.checks) std::cout << (c.passed ? "PASS " : "FAIL ") << a.suite << ": " << c.name << "\n";
  if (!r.passed()) {
    std::cerr << "failed check: " << r.first_failure() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust estimation of Gaussian precision matrices from contaminated samples"};
  app.set_version_flag("--version", std::string("robprec ") + kVersion + " (rng: " + kGeneratorId + ")");
  app.require_subcommand(1, 1);
  app.footer("Options from --config are overridden by flags given on the command line.\n"
             "Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.");

  GenerateArgs gen;
  FitArgs fit;
  BenchmarkArgs bench;
  VerifyArgs ver;
  setup_generate(app, gen);
  setup_fit(app, fit);
  setup_benchmark(app, bench);
  setup_verify(app, ver);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (app.got_subcommand("generate")) return run_generate(gen);
    if (app.got_subcommand("fit")) return run_fit(fit);
    if (app.got_subcommand("benchmark")) return run_benchmark(bench);
    return run_verify(ver);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
}
