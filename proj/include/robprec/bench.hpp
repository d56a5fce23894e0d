#pragma once

// Monte-Carlo harness: scenario grids, oracle tuning, replicated error
// statistics, the naive MLE baseline, rate regression and report output.

#include <algorithm>
#include <atomic>
#include <functional>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "robprec/errors.hpp"
#include "robprec/estimator.hpp"
#include "robprec/metrics.hpp"
#include "robprec/model.hpp"
#include "robprec/rng.hpp"
#include "robprec/sampling.hpp"
#include "robprec/serialization.hpp"
#include "robprec/solver.hpp"

namespace robprec {

enum class EstimatorKind { Our1, Our2, NaiveMLE };

inline std::string_view to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::Our1: return "Our1";
    case EstimatorKind::Our2: return "Our2";
    case EstimatorKind::NaiveMLE: return "NaiveMLE";
  }
  return "unknown";
}

inline EstimatorKind parse_estimator(std::string_view name) {
  if (name == "Our1") return EstimatorKind::Our1;
  if (name == "Our2") return EstimatorKind::Our2;
  if (name == "NaiveMLE") return EstimatorKind::NaiveMLE;
  throw InvalidArgument("unknown estimator '" + std::string(name) + "' (expected Our1, Our2 or NaiveMLE)");
}

/// Pseudo-inverse of the centered empirical covariance (divisor n).
inline Matrix naive_mle(const Matrix& x) {
  detail::require(x.rows() >= 2, "naive MLE needs at least two rows");
  return linalg::symmetric_pseudo_inverse(linalg::empirical_covariance(x));
}

/// 8 log-spaced points over [lambda / 8, 8 lambda].
inline std::vector<double> default_lambda_grid(double lambda_universal, int points = 8) {
  detail::require(lambda_universal > 0.0 && points >= 2, "invalid grid request");
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double lo = std::log(lambda_universal / 8.0);
  const double hi = std::log(lambda_universal * 8.0);
  for (int k = 0; k < points; ++k)
    grid[static_cast<std::size_t>(k)] = std::exp(lo + (hi - lo) * k / (points - 1));
  return grid;
}

/// Smallest lambda at which Theta = 0 solves the moderate program: the
/// largest row norm of the fidelity gradient at Theta = 0.
inline double lambda_max_moderate(const Matrix& xn, bool fit_intercept) {
  const ProjectorCache projectors(xn, fit_intercept);
  Vector rows = Vector::Zero(xn.rows());
  for (Index j = 0; j < xn.cols(); ++j) {
    const Vector z = projectors.apply(j, xn.col(j));
    const double denom = z.squaredNorm();
    if (denom > 0.0) rows += z.cwiseAbs2() / denom;
  }
  return std::sqrt(rows.maxCoeff());
}

/// Log-spaced points from lambda_max down to lambda_max / 4.
inline std::vector<double> default_lambda_grid_moderate(double lambda_max, int points = 16) {
  detail::require(lambda_max > 0.0 && points >= 2, "invalid grid request");
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k)
    grid[static_cast<std::size_t>(k)] = lambda_max * std::pow(0.25, static_cast<double>(k) / (points - 1));
  return grid;
}

inline std::vector<double> default_gamma_grid(SolverMode mode) {
  if (mode == SolverMode::Moderate) return {0.0};
  return {0.0, 0.25, 0.5, 1.0};
}

struct Scenario {
  std::string name = "scenario";
  ModelSpec model_spec{ModelVariant::Toeplitz06};
  Index p = 5;
  Index n = 300;
  std::vector<double> epsilon_grid{0.1};
  int replications = 1;
  /// Empty grids take the defaults around the universal lambda of each cell.
  std::vector<double> lambda_grid;
  std::vector<double> gamma_grid;
  std::vector<EstimatorKind> estimators{EstimatorKind::Our1, EstimatorKind::Our2, EstimatorKind::NaiveMLE};
  std::uint64_t seed_base = 1;
  SolverMode mode = SolverMode::Moderate;
  ContaminationScheme scheme = ContaminationScheme::ReplaceStandardNormal;
  double m_e = 1.0;
  double delta = 0.05;
  /// Wall-clock timings make reports non-reproducible; off by default.
  bool record_runtime = false;
  /// Solver iteration budget per grid point.
  long max_iterations = 5000;

  void validate() const {
    detail::require(p >= 2, "scenario p must be at least 2");
    detail::require(n >= 2, "scenario n must be at least 2");
    detail::require(!epsilon_grid.empty(), "epsilon grid must be nonempty");
    for (double e : epsilon_grid) outlier_count(e, n);
    detail::require(replications >= 1, "replications must be at least 1");
    detail::require(!estimators.empty(), "estimator list must be nonempty");
    for (double l : lambda_grid) detail::require(l > 0.0, "lambda grid entries must be positive");
    for (double g : gamma_grid) detail::require(g >= 0.0, "gamma grid entries must be nonnegative");
    detail::require(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
    detail::require(max_iterations > 0, "max_iterations must be positive");
    if (mode == SolverMode::Moderate) detail::require(n > p, "moderate mode requires n > p");
  }
};

struct CellRecord {
  EstimatorKind estimator = EstimatorKind::Our1;
  std::size_t epsilon_index = 0;
  double epsilon = 0.0;
  int replication = 0;
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double frob_error = std::numeric_limits<double>::quiet_NaN();
  double theta_err_11 = std::numeric_limits<double>::quiet_NaN();
  double theta_err_21 = std::numeric_limits<double>::quiet_NaN();
  double theta_err_22 = std::numeric_limits<double>::quiet_NaN();
  double runtime_ms = 0.0;
  bool failed = false;
  std::string failure;
};

struct Aggregate {
  EstimatorKind estimator = EstimatorKind::Our1;
  double epsilon = 0.0;
  int count = 0;
  int failed = 0;
  double mean_frob = 0.0;
  double std_frob = 0.0;
  double mean_theta_11 = 0.0;
  double mean_theta_21 = 0.0;
  double mean_theta_22 = 0.0;
  double mean_runtime_ms = 0.0;
};

struct BenchmarkReport {
  Scenario scenario;
  std::string model_ref;
  std::vector<CellRecord> records;
  std::vector<Aggregate> summary;

  const Aggregate& aggregate(EstimatorKind e, double epsilon) const {
    for (const auto& a : summary)
      if (a.estimator == e && a.epsilon == epsilon) return a;
    throw InvalidArgument("no aggregate for the requested estimator and epsilon");
  }
};

struct GridPoint {
  double lambda = 0.0;
  double gamma = 0.0;
};

struct TuneResult {
  double lambda = 0.0;
  double gamma = 0.0;
  double error = 0.0;
};

namespace detail {

struct GridEvaluation {
  GridPoint point;
  bool ok = false;
  std::string failure;
  double err_our1 = std::numeric_limits<double>::infinity();
  double err_our2 = std::numeric_limits<double>::infinity();
  Matrix theta_hat;
  double runtime_ms = 0.0;
};

inline SolverConfig grid_config(SolverMode mode, const GridPoint& g, double delta) {
  SolverConfig c = mode == SolverMode::Moderate ? SolverConfig::moderate(g.lambda)
                                                : SolverConfig::highdim(g.lambda, g.gamma);
  c.delta = delta;
  return c;
}

/// Fits from the largest lambda down. Once a fit interpolates the data (a
/// zero residual column), smaller lambdas are skipped.
inline std::vector<GridEvaluation> evaluate_grid(const ContaminatedDataset& d, const PrecisionModel& model,
                                                 std::vector<double> lambdas, const std::vector<double>& gammas,
                                                 SolverMode mode, double delta, bool need_mle,
                                                 long max_iterations) {
  std::sort(lambdas.begin(), lambdas.end(), std::greater<>());
  std::vector<GridEvaluation> out;
  bool interpolating = false;
  for (double lambda : lambdas) {
    for (double gamma : gammas) {
      GridEvaluation ev;
      ev.point = {lambda, mode == SolverMode::Moderate ? 0.0 : gamma};
      if (interpolating) {
        ev.failure = "skipped: the fit interpolates at a larger lambda";
        out.push_back(std::move(ev));
        if (mode == SolverMode::Moderate) break;
        continue;
      }
      const auto start = std::chrono::steady_clock::now();
      try {
        SolverConfig config = grid_config(mode, ev.point, delta);
        config.max_outer_iterations = max_iterations;
        const FitResult r = fit_pipeline(d.x, config);
        ev.err_our1 = frobenius_error(r.omega_hat_pd, model.omega_star);
        ev.theta_hat = r.raw.theta_hat;
        ev.ok = true;
        if (need_mle) {
          try {
            ev.err_our2 = frobenius_error(repair_pd(reestimate_mle(d.x, r.outliers_hat).omega), model.omega_star);
          } catch (const Error& e) {
            ev.failure = std::string("re-estimation: ") + e.what();
          }
        }
      } catch (const NumericalError& e) {
        ev.failure = e.what();
        interpolating = true;
      } catch (const Error& e) {
        ev.failure = e.what();
      }
      ev.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out.push_back(std::move(ev));
      if (mode == SolverMode::Moderate) break;
    }
  }
  return out;
}

/// Smallest error; ties go to the larger lambda, then the larger gamma.
inline std::optional<std::size_t> pick_oracle(const std::vector<GridEvaluation>& evals, bool our2) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < evals.size(); ++k) {
    const auto& ev = evals[k];
    const double err = our2 ? ev.err_our2 : ev.err_our1;
    if (!ev.ok || !std::isfinite(err)) continue;
    if (!best) {
      best = k;
      continue;
    }
    const auto& b = evals[*best];
    const double berr = our2 ? b.err_our2 : b.err_our1;
    const bool better = err < berr ||
                        (err == berr && (ev.point.lambda > b.point.lambda ||
                                         (ev.point.lambda == b.point.lambda && ev.point.gamma > b.point.gamma)));
    if (better) best = k;
  }
  return best;
}

inline std::string grid_failures(const std::vector<GridEvaluation>& evals) {
  std::string msg = "all grid points failed:";
  for (const auto& ev : evals)
    msg += " [lambda=" + io::format_double(ev.point.lambda) + ", gamma=" + io::format_double(ev.point.gamma) +
           ": " + ev.failure + "]";
  return msg;
}

inline void fill_theta_errors(CellRecord& rec, const Matrix& theta_hat, const Matrix& theta_star) {
  const Matrix delta = theta_hat - theta_star;
  rec.theta_err_11 = mixed_norm(delta, 1, 1);
  rec.theta_err_21 = mixed_norm(delta, 2, 1);
  rec.theta_err_22 = mixed_norm(delta, 2, 2);
}

inline std::vector<double> cell_lambda_grid(const Scenario& s, const ContaminatedDataset& d) {
  if (!s.lambda_grid.empty()) return s.lambda_grid;
  if (s.mode == SolverMode::Moderate) return default_lambda_grid_moderate(lambda_max_moderate(scaled_design(d.x), false));
  return default_lambda_grid(universal_lambda_highdim(s.n, s.p, s.delta, outlier_count(d.spec.epsilon, s.n)));
}

inline std::uint64_t variant_code(const ModelSpec& spec) { return static_cast<std::uint64_t>(spec.variant()); }

}  // namespace detail

/// Oracle (lambda, gamma) for one estimator of the robust family on one dataset.
inline TuneResult oracle_tune(const ContaminatedDataset& dataset, const std::vector<double>& lambda_grid,
                              const std::vector<double>& gamma_grid, const PrecisionModel& model,
                              EstimatorKind estimator, SolverMode mode = SolverMode::Moderate,
                              double delta = 0.05, long max_iterations = 50000) {
  detail::require(!lambda_grid.empty() && !gamma_grid.empty(), "tuning grids must be nonempty");
  detail::require(estimator != EstimatorKind::NaiveMLE, "the naive MLE has no tuning parameters");
  const bool our2 = estimator == EstimatorKind::Our2;
  const auto evals =
      detail::evaluate_grid(dataset, model, lambda_grid, gamma_grid, mode, delta, our2, max_iterations);
  const auto best = detail::pick_oracle(evals, our2);
  if (!best) throw NumericalError(detail::grid_failures(evals));
  const auto& ev = evals[*best];
  return {ev.point.lambda, ev.point.gamma, our2 ? ev.err_our2 : ev.err_our1};
}

/// Seed of one (epsilon, replication) cell.
inline std::uint64_t cell_seed(const Scenario& s, std::size_t epsilon_index, int replication) {
  return derive_seed(s.seed_base, {detail::variant_code(s.model_spec), static_cast<std::uint64_t>(s.n),
                                   static_cast<std::uint64_t>(epsilon_index),
                                   static_cast<std::uint64_t>(replication)});
}

namespace detail {

inline std::vector<CellRecord> run_cell(const Scenario& s, const PrecisionModel& model, std::size_t eidx, int rep) {
  const double epsilon = s.epsilon_grid[eidx];
  std::vector<CellRecord> out;
  const auto base_record = [&](EstimatorKind e) {
    CellRecord r;
    r.estimator = e;
    r.epsilon_index = eidx;
    r.epsilon = epsilon;
    r.replication = rep;
    return r;
  };

  ContaminationSpec spec;
  spec.epsilon = epsilon;
  spec.scheme = s.scheme;
  spec.m_e = s.m_e;
  spec.seed = cell_seed(s, eidx, rep);
  std::optional<ContaminatedDataset> data;
  std::string data_failure;
  try {
    data = generate_dataset(model, s.n, spec);
  } catch (const Error& e) {
    data_failure = e.what();
  }

  const bool want_our1 = std::find(s.estimators.begin(), s.estimators.end(), EstimatorKind::Our1) != s.estimators.end();
  const bool want_our2 = std::find(s.estimators.begin(), s.estimators.end(), EstimatorKind::Our2) != s.estimators.end();
  std::vector<GridEvaluation> evals;
  if (data && (want_our1 || want_our2)) {
    const auto gammas = s.gamma_grid.empty() ? default_gamma_grid(s.mode) : s.gamma_grid;
    evals = evaluate_grid(*data, model, cell_lambda_grid(s, *data), gammas, s.mode, s.delta, want_our2,
                          s.max_iterations);
  }

  for (EstimatorKind e : s.estimators) {
    CellRecord rec = base_record(e);
    if (!data) {
      rec.failed = true;
      rec.failure = data_failure;
      out.push_back(std::move(rec));
      continue;
    }
    if (e == EstimatorKind::NaiveMLE) {
      const auto start = std::chrono::steady_clock::now();
      try {
        rec.frob_error = frobenius_error(repair_pd(naive_mle(data->x)), model.omega_star);
      } catch (const Error& ex) {
        rec.failed = true;
        rec.failure = ex.what();
      }
      if (s.record_runtime)
        rec.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      out.push_back(std::move(rec));
      continue;
    }
    const bool our2 = e == EstimatorKind::Our2;
    const auto best = pick_oracle(evals, our2);
    if (!best) {
      rec.failed = true;
      rec.failure = grid_failures(evals);
    } else {
      const auto& ev = evals[*best];
      rec.lambda = ev.point.lambda;
      rec.gamma = ev.point.gamma;
      rec.frob_error = our2 ? ev.err_our2 : ev.err_our1;
      fill_theta_errors(rec, ev.theta_hat, data->theta_star);
      if (s.record_runtime) rec.runtime_ms = ev.runtime_ms;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<Aggregate> aggregate(const Scenario& s, const std::vector<CellRecord>& records) {
  std::vector<Aggregate> out;
  for (double epsilon : s.epsilon_grid) {
    for (EstimatorKind e : s.estimators) {
      Aggregate a;
      a.estimator = e;
      a.epsilon = epsilon;
      std::vector<const CellRecord*> ok;
      for (const auto& r : records) {
        if (r.estimator != e || r.epsilon != epsilon) continue;
        if (r.failed) {
          ++a.failed;
        } else {
          ok.push_back(&r);
        }
      }
      a.count = static_cast<int>(ok.size());
      if (!ok.empty()) {
        const double m = static_cast<double>(ok.size());
        for (const auto* r : ok) {
          a.mean_frob += r->frob_error;
          a.mean_theta_11 += r->theta_err_11;
          a.mean_theta_21 += r->theta_err_21;
          a.mean_theta_22 += r->theta_err_22;
          a.mean_runtime_ms += r->runtime_ms;
        }
        a.mean_frob /= m;
        a.mean_theta_11 /= m;
        a.mean_theta_21 /= m;
        a.mean_theta_22 /= m;
        a.mean_runtime_ms /= m;
        if (ok.size() > 1) {
          double ss = 0.0;
          for (const auto* r : ok) ss += (r->frob_error - a.mean_frob) * (r->frob_error - a.mean_frob);
          a.std_frob = std::sqrt(ss / (m - 1.0));
        }
      }
      out.push_back(a);
    }
  }
  return out;
}

}  // namespace detail

/// Cells run on `jobs` threads; records are merged in (epsilon, replication,
/// estimator) order, so the report does not depend on `jobs`.
inline BenchmarkReport run_scenario(const Scenario& s, int jobs = 1) {
  s.validate();
  detail::require(jobs >= 1, "jobs must be at least 1");
  const PrecisionModel model = s.model_spec.variant() == ModelVariant::Custom
                                   ? normalize_precision(*s.model_spec.custom_matrix())
                                   : make_model(s.model_spec, s.p);
  detail::require(model.p == s.p, "custom model dimension does not match scenario p");

  const std::size_t cells = s.epsilon_grid.size() * static_cast<std::size_t>(s.replications);
  std::vector<std::vector<CellRecord>> results(cells);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < cells; k = next++) {
      const std::size_t eidx = k / static_cast<std::size_t>(s.replications);
      const int rep = static_cast<int>(k % static_cast<std::size_t>(s.replications));
      results[k] = detail::run_cell(s, model, eidx, rep);
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  BenchmarkReport report;
  report.scenario = s;
  report.model_ref = model_ref(model);
  for (auto& cell : results)
    for (auto& r : cell) report.records.push_back(std::move(r));
  report.summary = detail::aggregate(s, report.records);
  return report;
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;
};

/// OLS of log(error) on log(n). Nonpositive errors are dropped and counted.
inline RateFit rate_regression(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> lx, ly;
  RateFit f;
  for (const auto& [n, err] : points) {
    detail::require(n > 0.0, "sample sizes must be positive");
    if (!(err > 0.0)) {
      ++f.excluded;
      continue;
    }
    lx.push_back(std::log(n));
    ly.push_back(std::log(err));
  }
  std::vector<double> distinct = lx;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  detail::require(distinct.size() >= 4, "rate regression needs at least 4 distinct sample sizes");
  f.used = lx.size();
  const double m = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
    syy += (ly[k] - my) * (ly[k] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    const double e = ly[k] - (f.intercept + f.slope * lx[k]);
    sse += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return f;
}

/// Structural checks of a report; returns the list of violations.
inline std::vector<std::string> validate_report(const BenchmarkReport& r) {
  std::vector<std::string> issues;
  const auto& s = r.scenario;
  const std::size_t expected = s.epsilon_grid.size() * static_cast<std::size_t>(s.replications) * s.estimators.size();
  if (r.records.size() != expected)
    issues.push_back("record count " + std::to_string(r.records.size()) + " != " + std::to_string(expected));
  const double rows = std::sqrt(static_cast<double>(s.n));
  const double cols = std::sqrt(static_cast<double>(s.p));
  for (const auto& rec : r.records) {
    if (rec.failed) continue;
    const std::string where = std::string(to_string(rec.estimator)) + " eps=" + io::format_double(rec.epsilon) +
                              " rep=" + std::to_string(rec.replication);
    if (!(rec.frob_error >= 0.0)) issues.push_back(where + ": negative or missing error");
    if (std::isnan(rec.theta_err_22)) continue;
    if (rec.theta_err_11 < 0.0 || rec.theta_err_21 < 0.0 || rec.theta_err_22 < 0.0)
      issues.push_back(where + ": negative theta error");
    const double slack = 1.0 + 1e-12;
    if (rec.theta_err_21 > rows * rec.theta_err_22 * slack) issues.push_back(where + ": ||.||_{2,1} > sqrt(n) ||.||_{2,2}");
    if (rec.theta_err_11 > cols * rec.theta_err_21 * slack) issues.push_back(where + ": ||.||_{1,1} > sqrt(p) ||.||_{2,1}");
  }
  for (const auto& a : r.summary) {
    double sum = 0.0;
    int count = 0;
    for (const auto& rec : r.records)
      if (!rec.failed && rec.estimator == a.estimator && rec.epsilon == a.epsilon) {
        sum += rec.frob_error;
        ++count;
      }
    if (count != a.count || (count > 0 && sum / count != a.mean_frob))
      issues.push_back("aggregate mismatch for " + std::string(to_string(a.estimator)));
  }
  return issues;
}

// Report output.

inline std::string report_csv(const BenchmarkReport& r) {
  std::string out =
      "model,p,n,epsilon,estimator,replication,lambda,gamma,frob_error,theta_err_11,theta_err_21,theta_err_22,"
      "runtime_ms\n";
  for (const auto& rec : r.records) {
    out += r.model_ref;
    out += ',' + std::to_string(r.scenario.p);
    out += ',' + std::to_string(r.scenario.n);
    out += ',' + io::format_double(rec.epsilon);
    out += ',' + std::string(to_string(rec.estimator));
    out += ',' + std::to_string(rec.replication);
    for (double v : {rec.lambda, rec.gamma, rec.frob_error, rec.theta_err_11, rec.theta_err_21, rec.theta_err_22,
                     rec.runtime_ms})
      out += ',' + io::format_double(v);
    out += '\n';
  }
  return out;
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json scenario_to_json(const Scenario& s) {
  Json j;
  j["name"] = s.name;
  j["model"] = std::string(to_string(s.model_spec.variant()));
  if (s.model_spec.custom_matrix()) j["custom_matrix"] = io::to_json(*s.model_spec.custom_matrix());
  j["p"] = s.p;
  j["n"] = s.n;
  j["epsilon_grid"] = s.epsilon_grid;
  j["replications"] = s.replications;
  j["lambda_grid"] = s.lambda_grid;
  j["gamma_grid"] = s.gamma_grid;
  Json est = Json::array();
  for (auto e : s.estimators) est.push_back(std::string(to_string(e)));
  j["estimators"] = est;
  j["seed_base"] = s.seed_base;
  j["mode"] = std::string(to_string(s.mode));
  j["scheme"] = std::string(to_string(s.scheme));
  j["m_e"] = s.m_e;
  j["delta"] = s.delta;
  j["record_runtime"] = s.record_runtime;
  j["max_iterations"] = s.max_iterations;
  return j;
}

inline Scenario scenario_from_json(const Json& j) {
  static const std::vector<std::string> known{"name", "model", "custom_matrix", "p", "n", "epsilon_grid",
                                              "replications", "lambda_grid", "gamma_grid", "estimators",
                                              "seed_base", "mode", "scheme", "m_e", "delta", "record_runtime",
                                              "max_iterations"};
  if (!j.is_object()) throw InvalidArgument("scenario must be a JSON object");
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw InvalidArgument("scenario: unknown key '" + item.key() + "'");
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    const std::string model = j.value("model", std::string("toeplitz"));
    if (model == "custom") {
      if (!j.contains("custom_matrix")) throw InvalidArgument("scenario: custom model needs custom_matrix");
      s.model_spec = ModelSpec::custom(io::matrix_from_json(j.at("custom_matrix")));
    } else {
      s.model_spec = ModelSpec(parse_model_variant(model));
    }
    s.p = j.value("p", s.p);
    s.n = j.value("n", s.n);
    if (j.contains("epsilon_grid")) s.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
    s.replications = j.value("replications", s.replications);
    if (j.contains("lambda_grid")) s.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("gamma_grid")) s.gamma_grid = j.at("gamma_grid").get<std::vector<double>>();
    if (j.contains("estimators")) {
      s.estimators.clear();
      for (const auto& e : j.at("estimators")) s.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    s.seed_base = j.value("seed_base", s.seed_base);
    if (j.contains("mode")) s.mode = parse_solver_mode(j.at("mode").get<std::string>());
    if (j.contains("scheme")) s.scheme = parse_contamination_scheme(j.at("scheme").get<std::string>());
    s.m_e = j.value("m_e", s.m_e);
    s.delta = j.value("delta", s.delta);
    s.record_runtime = j.value("record_runtime", s.record_runtime);
    s.max_iterations = j.value("max_iterations", s.max_iterations);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline Json report_json(const BenchmarkReport& r) {
  Json j;
  j["scenario"] = scenario_to_json(r.scenario);
  j["model_ref"] = r.model_ref;
  j["generator"] = kGeneratorId;
  j["cell_seed"] = "derive_seed(seed_base, [model, n, epsilon_index, replication])";
  j["records"] = r.records.size();
  Json summary = Json::array();
  for (const auto& a : r.summary) {
    Json s;
    s["estimator"] = std::string(to_string(a.estimator));
    s["epsilon"] = a.epsilon;
    s["count"] = a.count;
    s["failed"] = a.failed;
    s["mean_frob_error"] = number_or_null(a.count ? a.mean_frob : NAN);
    s["std_frob_error"] = number_or_null(a.count ? a.std_frob : NAN);
    s["mean_theta_err_11"] = number_or_null(a.count ? a.mean_theta_11 : NAN);
    s["mean_theta_err_21"] = number_or_null(a.count ? a.mean_theta_21 : NAN);
    s["mean_theta_err_22"] = number_or_null(a.count ? a.mean_theta_22 : NAN);
    s["mean_runtime_ms"] = a.mean_runtime_ms;
    summary.push_back(std::move(s));
  }
  j["summary"] = std::move(summary);
  Json failures = Json::array();
  for (const auto& rec : r.records) {
    if (!rec.failed) continue;
    Json f;
    f["estimator"] = std::string(to_string(rec.estimator));
    f["epsilon"] = rec.epsilon;
    f["replication"] = rec.replication;
    f["message"] = rec.failure;
    failures.push_back(std::move(f));
  }
  j["failures"] = std::move(failures);
  return j;
}

inline void write_report(const std::filesystem::path& dir, const BenchmarkReport& r) {
  io::ensure_directory(dir);
  io::write_text(dir / "report.csv", report_csv(r));
  io::write_text(dir / "report.json", io::dump(report_json(r)));
}

}  // namespace robprec
