#pragma once

// Plain CSV / JSON import and export. Doubles are written in the shortest form
// that parses back to the same value, so every round trip is bit-stable.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "robprec/errors.hpp"
#include "robprec/estimator.hpp"
#include "robprec/linalg.hpp"
#include "robprec/model.hpp"
#include "robprec/sampling.hpp"
#include "robprec/solver.hpp"

namespace robprec {

using Json = nlohmann::ordered_json;

namespace io {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("not a number: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One row per matrix row; an optional header line of column indices.
inline std::string matrix_to_csv(const Matrix& m, bool header = true) {
  std::string out;
  if (header) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += std::to_string(j);
    }
    out += '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline std::string vector_to_csv(const Vector& v) { return matrix_to_csv(v.transpose()); }

namespace detail {

inline bool is_index_header(std::string_view line) {
  std::size_t k = 0;
  for (auto cell : split(line)) {
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    if (cell != std::to_string(k++)) return false;
  }
  return true;
}

}  // namespace detail

/// Parses numeric CSV. A first line that is not entirely numeric, or that is
/// exactly the column indices 0,1,...,p-1, is taken as a header. Ragged rows
/// and non-numeric cells are reported by line number.
inline Matrix matrix_from_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    if (rows.empty() && detail::is_index_header(line)) continue;
    std::vector<double> values;
    try {
      for (auto cell : split(line)) values.push_back(parse_double(cell));
    } catch (const ParseError& e) {
      if (rows.empty() && line_no == 1) continue;
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (rows.empty()) {
      width = values.size();
    } else if (values.size() != width) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " values, found " + std::to_string(values.size()));
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw ParseError("no numeric rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return m;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  try {
    return matrix_from_csv(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  write_text(path, matrix_to_csv(m));
}

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const IndexSet& s) {
  Json out = Json::array();
  for (Index i : s) out.push_back(i);
  return out;
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("matrix must be an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const auto cols = rows == 0 ? Index{0} : static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw ParseError("ragged matrix rows");
    for (Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("vector must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline IndexSet index_set_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("index set must be an array");
  IndexSet s;
  for (const auto& v : j) s.push_back(v.get<Index>());
  return s;
}

inline Json parse_json(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace io

// Model: {p, variant, omega_star (row-major), mu_star}.

inline Json model_to_json(const PrecisionModel& m) {
  Json j;
  j["p"] = m.p;
  j["variant"] = m.variant;
  j["omega_star"] = io::to_json(m.omega_star);
  j["mu_star"] = io::to_json(m.mu_star);
  return j;
}

inline PrecisionModel model_from_json(const Json& j) {
  try {
    const Index p = j.at("p").get<Index>();
    const Matrix omega = io::matrix_from_json(j.at("omega_star"));
    if (omega.rows() != p || omega.cols() != p) throw ParseError("omega_star is not p x p");
    Vector mu = j.contains("mu_star") ? io::vector_from_json(j.at("mu_star")) : Vector::Zero(p);
    return model_from_precision(omega, mu, j.value("variant", std::string("custom")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

// Dataset: data.csv (X) plus truth.json sidecar.

struct DatasetFiles {
  Matrix x;
  IndexSet outliers;
  ContaminationSpec spec;
  std::string model_ref;
  std::optional<PrecisionModel> model;
};

inline Json dataset_sidecar(const ContaminatedDataset& d, const PrecisionModel* model = nullptr) {
  Json j;
  j["n"] = d.n();
  j["p"] = d.p();
  j["outliers"] = io::to_json(d.outliers);
  j["outlier_count"] = d.outliers.size();
  j["seed"] = d.spec.seed;
  j["epsilon"] = d.spec.epsilon;
  j["scheme"] = std::string(to_string(d.spec.scheme));
  if (d.spec.scheme == ContaminationScheme::AdditiveBoundedRows) j["m_e"] = d.spec.m_e;
  j["model_ref"] = d.model_ref;
  j["generator"] = kGeneratorId;
  if (model) j["model"] = model_to_json(*model);
  return j;
}

inline void write_dataset(const std::filesystem::path& dir, const ContaminatedDataset& d,
                          const PrecisionModel* model = nullptr) {
  io::ensure_directory(dir);
  io::write_text(dir / "data.csv", io::matrix_to_csv(d.x));
  io::write_text(dir / "truth.json", io::dump(dataset_sidecar(d, model)));
}

inline DatasetFiles read_dataset(const std::filesystem::path& dir) {
  DatasetFiles f;
  f.x = io::read_matrix_csv(dir / "data.csv");
  const Json j = io::parse_json(io::read_text(dir / "truth.json"), (dir / "truth.json").string());
  try {
    f.outliers = io::index_set_from_json(j.at("outliers"));
    f.spec.seed = j.at("seed").get<std::uint64_t>();
    f.spec.epsilon = j.at("epsilon").get<double>();
    f.spec.scheme = parse_contamination_scheme(j.at("scheme").get<std::string>());
    f.spec.m_e = j.value("m_e", 1.0);
    f.model_ref = j.at("model_ref").get<std::string>();
    if (j.contains("model")) f.model = model_from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("truth.json: " + std::string(e.what()));
  }
  return f;
}

// Solver configuration.

inline Json config_to_json(const SolverConfig& c) {
  Json j;
  j["lambda"] = c.lambda;
  j["gamma"] = c.gamma;
  j["delta"] = c.delta;
  j["mode"] = std::string(to_string(c.mode));
  j["fit_intercept"] = c.fit_intercept;
  j["penalize_diagonal"] = c.penalize_diagonal;
  j["max_outer_iterations"] = c.max_outer_iterations;
  j["tolerance_objective"] = c.tolerance_objective;
  j["tolerance_kkt"] = c.tolerance_kkt;
  j["smoothing_schedule"] = c.smoothing_schedule;
  j["sparsity_floor"] = c.sparsity_floor;
  return j;
}

/// Missing keys keep the values of `base`; a "mode" key resets the
/// mode-dependent intercept default before the other keys are applied.
inline SolverConfig config_from_json(const Json& j, SolverConfig base = {}) {
  try {
    if (j.contains("mode")) {
      base.mode = parse_solver_mode(j.at("mode").get<std::string>());
      base.fit_intercept = base.mode == SolverMode::HighDim;
    }
    if (j.contains("lambda")) base.lambda = j.at("lambda").get<double>();
    if (j.contains("gamma")) base.gamma = j.at("gamma").get<double>();
    if (j.contains("delta")) base.delta = j.at("delta").get<double>();
    if (j.contains("fit_intercept")) base.fit_intercept = j.at("fit_intercept").get<bool>();
    if (j.contains("penalize_diagonal")) base.penalize_diagonal = j.at("penalize_diagonal").get<bool>();
    if (j.contains("max_outer_iterations")) base.max_outer_iterations = j.at("max_outer_iterations").get<long>();
    if (j.contains("tolerance_objective")) base.tolerance_objective = j.at("tolerance_objective").get<double>();
    if (j.contains("tolerance_kkt")) base.tolerance_kkt = j.at("tolerance_kkt").get<double>();
    if (j.contains("smoothing_schedule"))
      base.smoothing_schedule = j.at("smoothing_schedule").get<std::vector<double>>();
    if (j.contains("sparsity_floor")) base.sparsity_floor = j.at("sparsity_floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("solver config: ") + e.what());
  }
  return base;
}

// Fit exports.

inline Json fit_raw_summary(const FitRaw& fit) {
  Json j;
  j["objective"] = fit.objective;
  j["kkt_residual"] = fit.kkt_residual;
  j["iterations"] = fit.iterations;
  j["status"] = std::string(to_string(fit.status));
  return j;
}

inline void write_fit_raw(const std::filesystem::path& dir, const FitRaw& fit) {
  io::ensure_directory(dir);
  io::write_text(dir / "b_hat.csv", io::matrix_to_csv(fit.b_hat));
  io::write_text(dir / "theta_hat.csv", io::matrix_to_csv(fit.theta_hat));
  io::write_text(dir / "c_hat.csv", io::vector_to_csv(fit.c_hat));
  io::write_text(dir / "fit.json", io::dump(fit_raw_summary(fit)));
}

inline Json fit_summary(const FitResult& r, const SolverConfig& config) {
  Json j;
  j["objective"] = r.raw.objective;
  j["kkt_residual"] = r.raw.kkt_residual;
  j["iterations"] = r.raw.iterations;
  j["status"] = std::string(to_string(r.raw.status));
  j["degenerate"] = r.raw.status == SolverStatus::Degenerate;
  j["mode"] = std::string(to_string(config.mode));
  j["lambda"] = config.lambda;
  j["gamma"] = config.gamma;
  j["delta"] = config.delta;
  j["fit_intercept"] = config.fit_intercept;
  j["n"] = r.raw.theta_hat.rows();
  j["p"] = r.raw.theta_hat.cols();
  j["omega_diag_hat"] = io::to_json(r.omega_diag_hat);
  j["outlier_count"] = r.outliers_hat.size();
  j["nonzero_offdiag_b"] = (r.raw.b_hat.array() != 0.0).count() - r.raw.b_hat.rows();
  return j;
}

/// Summary of a degenerate fit whose estimates could not be formed.
inline Json degenerate_fit_summary(const FitRaw& fit, const SolverConfig& config, const std::string& warning) {
  Json j = fit_raw_summary(fit);
  j["degenerate"] = true;
  j["warning"] = warning;
  j["mode"] = std::string(to_string(config.mode));
  j["lambda"] = config.lambda;
  j["gamma"] = config.gamma;
  j["delta"] = config.delta;
  j["fit_intercept"] = config.fit_intercept;
  j["n"] = fit.theta_hat.rows();
  j["p"] = fit.theta_hat.cols();
  j["omega_diag_hat"] = nullptr;
  j["outlier_count"] = nullptr;
  return j;
}

inline void write_fit_result(const std::filesystem::path& dir, const FitResult& r, const SolverConfig& config) {
  write_fit_raw(dir, r.raw);
  io::write_text(dir / "omega_hat.csv", io::matrix_to_csv(r.omega_hat));
  io::write_text(dir / "omega_hat_pd.csv", io::matrix_to_csv(r.omega_hat_pd));
  io::write_text(dir / "e_hat.csv", io::matrix_to_csv(r.e_hat));
  io::write_text(dir / "mu_hat.csv", io::vector_to_csv(r.mu_hat));
  io::write_text(dir / "outliers.json", io::dump(io::to_json(r.outliers_hat)));
  if (r.mle) {
    io::write_text(dir / "omega_mle.csv", io::matrix_to_csv(r.mle->omega));
    io::write_text(dir / "mu_mle.csv", io::vector_to_csv(r.mle->mu));
  }
  io::write_text(dir / "summary.json", io::dump(fit_summary(r, config)));
}

}  // namespace robprec
