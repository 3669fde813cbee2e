// File formats: strict rectangular CSV input (numeric cells, no imputation),
// flat key = value scenario documents, and the metrics CSV emitted by the
// simulation drivers (written to a temp file and renamed, so readers never see
// a partial document).
#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "medprod/dataset.hpp"
#include "medprod/simulation.hpp"

namespace medprod {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool parse_double(const std::string& text, double& value) {
  const char* b = text.data();
  const char* e = b + text.size();
  const auto res = std::from_chars(b, e, value);
  return res.ec == std::errc() && res.ptr == e;
}

inline bool parse_int64(const std::string& text, long long& value) {
  const char* b = text.data();
  const char* e = b + text.size();
  const auto res = std::from_chars(b, e, value);
  return res.ec == std::errc() && res.ptr == e;
}

inline bool parse_uint64(const std::string& text, std::uint64_t& value) {
  const char* b = text.data();
  const char* e = b + text.size();
  const auto res = std::from_chars(b, e, value);
  return res.ec == std::errc() && res.ptr == e;
}

}  // namespace detail

// ---- rectangular CSV input ----

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // every row has columns.size() cells

  Eigen::Index n_rows() const { return static_cast<Eigen::Index>(rows.size()); }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return j;
    fail(errc::missing_column, "csv: no column named '" + name + "'");
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.is_open(), errc::file_not_found, "csv: cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), errc::io_error,
          "csv: '" + path + "' has no header row");
  for (std::string& cell : (table.columns = detail::split(line, ',')))
    cell = detail::trim(cell);
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;  // ignore blank lines
    std::vector<std::string> cells = detail::split(line, ',');
    require(cells.size() == table.columns.size(), errc::missing_value,
            "csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                " fields where the header names " + std::to_string(table.columns.size()));
    for (std::string& cell : cells) cell = detail::trim(cell);
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// Extract one numeric column; empty cells and unparseable text are rejected
// with the file location, never imputed.
inline Eigen::VectorXd numeric_column(const CsvTable& table, const std::string& name) {
  const std::size_t j = table.column_index(name);
  Eigen::VectorXd v(table.n_rows());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string& cell = table.rows[i][j];
    const std::string where =
        "line " + std::to_string(i + 2) + ", column '" + name + "'";  // header is line 1
    require(!cell.empty(), errc::missing_value, "csv: missing value at " + where);
    double x = 0.0;
    require(detail::parse_double(cell, x) && std::isfinite(x), errc::non_numeric_cell,
            "csv: non-numeric cell at " + where);
    v[static_cast<Eigen::Index>(i)] = x;
  }
  return v;
}

inline void check_binary_column(const Eigen::VectorXd& v, const std::string& name) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    require(v[i] == 0.0 || v[i] == 1.0, errc::non_binary_value,
            "csv: line " + std::to_string(i + 2) + ", column '" + name +
                "' declared binary but holds " + std::to_string(v[i]));
}

// ---- scenario documents: flat "key = value" lines, # comments ----

struct ScenarioFile {
  SimulationScenario scenario;
  std::vector<double> prevalences;  // sweep grids only
};

inline ScenarioFile parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  require(in.is_open(), errc::file_not_found, "scenario: cannot open '" + path + "'");
  ScenarioFile doc;
  SimulationScenario& sc = doc.scenario;
  std::vector<std::string> seen;
  bool has_case = false, has_n = false, has_te = false, has_mp = false, has_reps = false;

  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const std::size_t eq = text.find('=');
    const std::string where = " (line " + std::to_string(line_no) + ")";
    require(eq != std::string::npos, errc::invalid_argument,
            "scenario: expected key = value" + where);
    const std::string key = detail::trim(text.substr(0, eq));
    const std::string value = detail::trim(text.substr(eq + 1));
    require(!key.empty() && !value.empty(), errc::invalid_argument,
            "scenario: empty key or value" + where);
    for (const std::string& k : seen)
      require(k != key, errc::invalid_argument, "scenario: duplicate key '" + key + "'" + where);
    seen.push_back(key);

    auto as_double = [&](const char* field) {
      double v = 0.0;
      require(detail::parse_double(value, v) && std::isfinite(v), errc::invalid_argument,
              "scenario: " + std::string(field) + " must be numeric" + where);
      return v;
    };
    auto as_int = [&](const char* field) {
      long long v = 0;
      require(detail::parse_int64(value, v), errc::invalid_argument,
              "scenario: " + std::string(field) + " must be an integer" + where);
      return v;
    };

    if (key == "id") {
      sc.id = value;
    } else if (key == "case") {
      const long long c = as_int("case");
      require(c >= 1 && c <= 4, errc::invalid_argument,
              "scenario: case must be 1, 2, 3, or 4" + where);
      sc.case_type = static_cast<CaseType>(c);
      has_case = true;
    } else if (key == "n") {
      sc.n = static_cast<int>(as_int("n"));
      has_n = true;
    } else if (key == "te_target") {
      sc.te_target = as_double("te_target");
      has_te = true;
    } else if (key == "mp_target") {
      sc.mp_target = as_double("mp_target");
      has_mp = true;
    } else if (key == "baseline_outcome_prev") {
      sc.baseline_outcome_prev = as_double("baseline_outcome_prev");
    } else if (key == "baseline_mediator_prev") {
      sc.baseline_mediator_prev = as_double("baseline_mediator_prev");
    } else if (key == "xm_correlation") {
      sc.xm_correlation = as_double("xm_correlation");
    } else if (key == "error_skewness") {
      sc.error_skewness = as_double("error_skewness");
    } else if (key == "replications") {
      sc.replications = static_cast<int>(as_int("replications"));
      has_reps = true;
    } else if (key == "seed") {
      std::uint64_t v = 0;
      require(detail::parse_uint64(value, v), errc::invalid_argument,
              "scenario: seed must be a non-negative integer" + where);
      sc.seed = v;
    } else if (key == "bootstrap_r") {
      BootstrapConfig cfg;
      cfg.replications = static_cast<int>(as_int("bootstrap_r"));
      sc.bootstrap = cfg;
    } else if (key == "ghq_nodes") {
      sc.ghq_nodes = static_cast<int>(as_int("ghq_nodes"));
    } else if (key == "flavors") {
      for (const std::string& part : detail::split(value, ','))
        sc.flavors.push_back(flavor_from_name(detail::trim(part)));
    } else if (key == "prevalences") {
      for (const std::string& part : detail::split(value, ',')) {
        double v = 0.0;
        require(detail::parse_double(detail::trim(part), v), errc::invalid_argument,
                "scenario: prevalences must be a comma-separated numeric list" + where);
        doc.prevalences.push_back(v);
      }
    } else {
      fail(errc::invalid_argument, "scenario: unknown key '" + key + "'" + where);
    }
  }
  require(has_case, errc::invalid_argument, "scenario: missing required key 'case'");
  require(has_n, errc::invalid_argument, "scenario: missing required key 'n'");
  require(has_te, errc::invalid_argument, "scenario: missing required key 'te_target'");
  require(has_mp, errc::invalid_argument, "scenario: missing required key 'mp_target'");
  require(has_reps, errc::invalid_argument, "scenario: missing required key 'replications'");
  return doc;
}

// ---- metrics CSV ----

inline std::string format_number(double v) {
  if (!std::isfinite(v)) return "";  // absent metrics render as empty cells
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string format_fixed3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline constexpr const char* metrics_csv_header =
    "scenario_id,case,n,te,mp,prevalence,flavor,measure,bias_percent,cr_delta,cr_boot,"
    "variance_ratio,n_failed,wall_seconds,status";

namespace detail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '"') c = ';';
  return s;
}

inline void append_metric_rows(std::string& out, const SimulationMetrics& m,
                               const std::string& status, bool timing) {
  for (const FlavorMetrics& fm : m.per_flavor) {
    for (int which = 0; which < 2; ++which) {
      const MeasureMetrics& mm = which == 0 ? fm.nie : fm.mp;
      out += csv_safe(m.scenario_id);
      out += ',';
      out += std::to_string(case_number(m.case_type));
      out += ',';
      out += std::to_string(m.n);
      out += ',';
      out += format_number(m.te_target);
      out += ',';
      out += format_number(m.mp_target);
      out += ',';
      out += format_number(m.prevalence);
      out += ',';
      out += flavor_name(fm.flavor);
      out += ',';
      out += which == 0 ? "NIE" : "MP";
      out += ',';
      out += format_number(mm.bias_percent);
      out += ',';
      out += format_number(mm.cr_delta);
      out += ',';
      out += mm.cr_boot ? format_number(*mm.cr_boot) : "";
      out += ',';
      out += format_number(mm.variance_ratio);
      out += ',';
      out += std::to_string(fm.n_failed);
      out += ',';
      out += format_fixed3(timing ? m.wall_seconds : 0.0);
      out += ',';
      out += csv_safe(status);
      out += '\n';
    }
  }
}

}  // namespace detail

// Atomic write: the target path appears only once the document is complete.
inline void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.is_open(), errc::io_error, "cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    require(out.good(), errc::io_error, "write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail(errc::io_error, "cannot move '" + tmp + "' into place at '" + path + "'");
  }
}

inline std::string render_metrics_csv(const std::vector<SweepRow>& rows, bool timing) {
  std::string out = metrics_csv_header;
  out += '\n';
  for (const SweepRow& row : rows)
    detail::append_metric_rows(out, row.metrics, row.error.empty() ? "ok" : row.error, timing);
  return out;
}

inline void write_metrics_csv(const std::string& path, const std::vector<SweepRow>& rows,
                              bool timing) {
  write_text_file_atomic(path, render_metrics_csv(rows, timing));
}

}  // namespace medprod
