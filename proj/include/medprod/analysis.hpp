// End-to-end analysis of a CSV dataset: load columns by role, fit both models,
// evaluate the selected flavors at the requested exposure contrast, attach
// delta (and optionally bootstrap) intervals, and render the result as a
// fixed-width table or a JSON document.
#pragma once

#include <json.hpp>

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "medprod/csvio.hpp"
#include "medprod/dataset.hpp"
#include "medprod/glm.hpp"
#include "medprod/inference.hpp"
#include "medprod/measures.hpp"

namespace medprod {

struct AnalysisConfig {
  std::string data_path;
  std::string outcome, mediator, exposure;  // column names
  bool binary_outcome = false;
  bool binary_mediator = false;
  std::vector<std::string> covariates_outcome, covariates_mediator;
  double x0 = 0.0, x1 = 1.0;                // exposure contrast x0 -> x1
  std::vector<double> c_outcome, c_mediator;  // covariate values (default: zeros)
  bool boot = false;
  int boot_r = 2000;
  std::uint64_t seed = 1;
  std::string flavor = "both";  // both | exact | approximate | probit
  int threads = 1;
};

struct ResultRow {
  std::string measure;  // NIE, TE, MP
  Flavor flavor = Flavor::exact;
  bool defined = true;  // false only for MP when TE is (numerically) zero
  double point = kNaN;
  double se = kNaN;
  double delta_lower = kNaN, delta_upper = kNaN;
  bool has_boot = false;
  double boot_lower = kNaN, boot_upper = kNaN;
};

struct ModelDiagnostics {
  int iterations = 0;
  bool converged = false;
  Eigen::Index parameters = 0;
  Link link = Link::identity;
};

struct AnalysisResult {
  AnalysisConfig config;
  CaseType case_type = CaseType::c1;
  Eigen::Index n = 0;
  ModelDiagnostics outcome_model, mediator_model;
  bool has_sigma2 = false;
  double sigma2 = kNaN;
  std::vector<ResultRow> rows;  // measure-major, flavor-minor
};

// "both" expands to the flavors worth comparing for the case; a named flavor
// must be admissible.
inline std::vector<Flavor> selected_flavors(CaseType c, const std::string& flavor) {
  if (flavor == "both") {
    if (c == CaseType::c3 || c == CaseType::c4) return {Flavor::approximate, Flavor::exact};
    return {Flavor::exact};
  }
  const Flavor f = flavor_from_name(flavor);
  require(flavor_admissible(c, f), errc::invalid_flavor,
          "flavor '" + flavor + "' is not available for this outcome/mediator case");
  return {f};
}

namespace detail {

inline void validate_analysis_config(const AnalysisConfig& cfg) {
  require(!cfg.data_path.empty(), errc::invalid_argument, "analysis: data_path is required");
  require(!cfg.outcome.empty() && !cfg.mediator.empty() && !cfg.exposure.empty(),
          errc::invalid_argument,
          "analysis: outcome, mediator, and exposure column names are required");
  require(std::isfinite(cfg.x0) && std::isfinite(cfg.x1), errc::invalid_argument,
          "analysis: x0 and x1 must be finite");
  require(cfg.c_outcome.empty() || cfg.c_outcome.size() == cfg.covariates_outcome.size(),
          errc::invalid_argument,
          "analysis: c_outcome must match covariates_outcome in length (or be empty for zeros)");
  require(cfg.c_mediator.empty() || cfg.c_mediator.size() == cfg.covariates_mediator.size(),
          errc::invalid_argument,
          "analysis: c_mediator must match covariates_mediator in length (or be empty for zeros)");
  if (cfg.boot)
    require(cfg.boot_r >= 1, errc::invalid_argument, "analysis: boot_r must be >= 1");
  require(cfg.threads >= 1, errc::invalid_argument, "analysis: threads must be >= 1");
}

struct AnalysisViews {
  Dataset unioned;        // covariates: outcome list, then mediator-only extras
  Dataset outcome_view;   // covariates: covariates_outcome, in order
  Dataset mediator_view;  // covariates: covariates_mediator, in order
};

inline AnalysisViews load_views(const AnalysisConfig& cfg) {
  validate_analysis_config(cfg);
  const CsvTable table = read_csv(cfg.data_path);
  const Eigen::VectorXd y = numeric_column(table, cfg.outcome);
  const Eigen::VectorXd x = numeric_column(table, cfg.exposure);
  const Eigen::VectorXd m = numeric_column(table, cfg.mediator);
  if (cfg.binary_outcome) check_binary_column(y, cfg.outcome);
  if (cfg.binary_mediator) check_binary_column(m, cfg.mediator);

  std::vector<std::string> union_names = cfg.covariates_outcome;
  for (const std::string& name : cfg.covariates_mediator) {
    bool present = false;
    for (const std::string& have : union_names) present = present || have == name;
    if (!present) union_names.push_back(name);
  }
  std::vector<Eigen::VectorXd> union_cols;
  union_cols.reserve(union_names.size());
  for (const std::string& name : union_names) union_cols.push_back(numeric_column(table, name));
  auto find_col = [&](const std::string& name) -> const Eigen::VectorXd& {
    for (std::size_t j = 0; j < union_names.size(); ++j)
      if (union_names[j] == name) return union_cols[j];
    fail(errc::missing_column, "csv: no column named '" + name + "'");  // unreachable
  };

  auto make = [&](const std::vector<std::string>& names) {
    Dataset d;
    d.y = y;
    d.x = x;
    d.m = m;
    d.y_binary = cfg.binary_outcome;
    d.m_binary = cfg.binary_mediator;
    d.w.resize(y.size(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j)
      d.w.col(static_cast<Eigen::Index>(j)) = find_col(names[j]);
    return d;
  };
  AnalysisViews views;
  views.unioned = make(union_names);
  views.outcome_view = make(cfg.covariates_outcome);
  views.mediator_view = make(cfg.covariates_mediator);
  return views;
}

}  // namespace detail

inline Dataset load_csv(const AnalysisConfig& cfg) {
  Dataset d = detail::load_views(cfg).unioned;
  d.validate();
  return d;
}

inline AnalysisResult analyze(const AnalysisConfig& cfg) {
  const CaseType c = case_from_flags(cfg.binary_outcome, cfg.binary_mediator);
  const std::vector<Flavor> flavors = selected_flavors(c, cfg.flavor);
  const detail::AnalysisViews views = detail::load_views(cfg);

  const FittedOutcome fo = fit_outcome_model(views.outcome_view);
  const FittedMediator fm = fit_mediator_model(views.mediator_view);
  bool want_sigma2 = false;
  for (Flavor f : flavors) want_sigma2 = want_sigma2 || needs_sigma2(c, f);
  const ThetaEstimate est = assemble_theta(fo, fm, want_sigma2);

  std::vector<MediationRequest> requests(flavors.size());
  for (std::size_t k = 0; k < flavors.size(); ++k) {
    MediationRequest& req = requests[k];
    req.x_star = cfg.x0;
    req.x_new = cfg.x1;
    req.flavor = flavors[k];
    req.w_outcome = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.covariates_outcome.size()));
    for (std::size_t j = 0; j < cfg.c_outcome.size(); ++j)
      req.w_outcome[static_cast<Eigen::Index>(j)] = cfg.c_outcome[j];
    req.w_mediator =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg.covariates_mediator.size()));
    for (std::size_t j = 0; j < cfg.c_mediator.size(); ++j)
      req.w_mediator[static_cast<Eigen::Index>(j)] = cfg.c_mediator[j];
  }

  std::vector<BootstrapResult> boot;
  if (cfg.boot) {
    BootstrapConfig bcfg;
    bcfg.replications = cfg.boot_r;
    bcfg.seed = cfg.seed;
    boot = percentile_bootstrap_multi(views.outcome_view, views.mediator_view, requests, bcfg,
                                      0.95, CovarianceKind::sandwich, cfg.threads);
  }

  AnalysisResult result;
  result.config = cfg;
  result.case_type = c;
  result.n = views.unioned.n();
  result.outcome_model = {fo.iterations, fo.converged, fo.beta.size(), fo.link};
  result.mediator_model = {fm.iterations, fm.converged, fm.gamma.size(), fm.link};
  result.has_sigma2 = fm.has_sigma2;
  result.sigma2 = fm.sigma2;

  struct FlavorEval {
    MeasureSet ms;
    double se_nie, se_te, se_mp;
  };
  std::vector<FlavorEval> evals(flavors.size());
  for (std::size_t k = 0; k < flavors.size(); ++k) {
    const MediationRequest& req = requests[k];
    FlavorEval& ev = evals[k];
    ev.ms = evaluate_measures(c, est.theta, est.layout, req);
    auto se_of = [&](auto pick) {
      auto fn = [&](const Eigen::VectorXd& th) {
        return pick(evaluate_measures(c, th, est.layout, req));
      };
      return std::sqrt(delta_variance(fn, est));
    };
    ev.se_nie = se_of([](const MeasureSet& m) { return m.nie; });
    ev.se_te = se_of([](const MeasureSet& m) { return m.te; });
    ev.se_mp = ev.ms.mp_defined
                   ? se_of([](const MeasureSet& m) { return m.mp_defined ? m.mp : kNaN; })
                   : kNaN;
  }

  const char* measures[3] = {"NIE", "TE", "MP"};
  for (int which = 0; which < 3; ++which) {
    for (std::size_t k = 0; k < flavors.size(); ++k) {
      const FlavorEval& ev = evals[k];
      ResultRow row;
      row.measure = measures[which];
      row.flavor = flavors[k];
      double point = kNaN, se = kNaN;
      if (which == 0) {
        point = ev.ms.nie;
        se = ev.se_nie;
      } else if (which == 1) {
        point = ev.ms.te;
        se = ev.se_te;
      } else if (ev.ms.mp_defined) {
        point = ev.ms.mp;
        se = ev.se_mp;
      } else {
        row.defined = false;
      }
      if (row.defined) {
        const IntervalEstimate ci = delta_interval(point, se);
        row.point = point;
        row.se = se;
        row.delta_lower = ci.lower;
        row.delta_upper = ci.upper;
        if (cfg.boot) {
          const IntervalEstimate& bi =
              which == 0 ? boot[k].nie : which == 1 ? boot[k].te : boot[k].mp;
          if (bi.defined) {
            row.has_boot = true;
            row.boot_lower = bi.lower;
            row.boot_upper = bi.upper;
          }
        }
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

namespace detail {

inline std::string fmt4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string fmtg(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline const char* case_label(CaseType c) {
  switch (c) {
    case CaseType::c1: return "continuous outcome, continuous mediator";
    case CaseType::c2: return "continuous outcome, binary mediator";
    case CaseType::c3: return "binary outcome, continuous mediator";
    case CaseType::c4: return "binary outcome, binary mediator";
  }
  return "?";
}

}  // namespace detail

// Fixed-width report; every numeric cell is the 4-decimal rendering of the
// corresponding JSON value.
inline std::string render_table(const AnalysisResult& r) {
  std::string out;
  out += "Mediation analysis: case " + std::to_string(case_number(r.case_type)) + " (" +
         detail::case_label(r.case_type) + ")\n";
  out += "n = " + std::to_string(r.n) + ", exposure contrast x0 = " + detail::fmtg(r.config.x0) +
         " -> x1 = " + detail::fmtg(r.config.x1) + ", confidence level 0.95\n\n";
  const bool boot = r.config.boot;
  out += detail::pad("measure", 9) + detail::pad("flavor", 14) + detail::pad("point", 12) +
         detail::pad("s.e.", 12) + detail::pad("delta 95% CI", 22);
  if (boot) out += "bootstrap 95% CI";
  out += '\n';
  for (const ResultRow& row : r.rows) {
    out += detail::pad(row.measure, 9);
    out += detail::pad(flavor_name(row.flavor), 14);
    if (!row.defined) {
      out += "undefined\n";
      continue;
    }
    out += detail::pad(detail::fmt4(row.point), 12);
    out += detail::pad(detail::fmt4(row.se), 12);
    out += detail::pad("[" + detail::fmt4(row.delta_lower) + ", " + detail::fmt4(row.delta_upper) + "]",
                       22);
    if (row.has_boot)
      out += "[" + detail::fmt4(row.boot_lower) + ", " + detail::fmt4(row.boot_upper) + "]";
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json to_json(const AnalysisResult& r) {
  nlohmann::ordered_json j;
  const AnalysisConfig& cfg = r.config;
  j["config_echo"] = {{"data_path", cfg.data_path},
                      {"outcome", cfg.outcome},
                      {"mediator", cfg.mediator},
                      {"exposure", cfg.exposure},
                      {"binary_outcome", cfg.binary_outcome},
                      {"binary_mediator", cfg.binary_mediator},
                      {"covariates_outcome", cfg.covariates_outcome},
                      {"covariates_mediator", cfg.covariates_mediator},
                      {"x0", cfg.x0},
                      {"x1", cfg.x1},
                      {"c_outcome", cfg.c_outcome},
                      {"c_mediator", cfg.c_mediator},
                      {"boot", cfg.boot},
                      {"boot_r", cfg.boot_r},
                      {"seed", cfg.seed},
                      {"flavor", cfg.flavor},
                      {"threads", cfg.threads}};
  nlohmann::ordered_json diag;
  diag["n"] = r.n;
  diag["case"] = case_number(r.case_type);
  auto model_json = [](const ModelDiagnostics& m) {
    return nlohmann::ordered_json{{"link", m.link == Link::logit ? "logit" : "identity"},
                                  {"iterations", m.iterations},
                                  {"converged", m.converged},
                                  {"parameters", m.parameters}};
  };
  diag["outcome_model"] = model_json(r.outcome_model);
  diag["mediator_model"] = model_json(r.mediator_model);
  if (r.has_sigma2) diag["sigma2"] = r.sigma2;
  j["fit_diagnostics"] = diag;

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const ResultRow& row : r.rows) {
    nlohmann::ordered_json item;
    item["measure"] = row.measure;
    item["flavor"] = flavor_name(row.flavor);
    item["defined"] = row.defined;
    item["point"] = row.defined ? nlohmann::ordered_json(row.point) : nullptr;
    item["se"] = row.defined ? nlohmann::ordered_json(row.se) : nullptr;
    item["delta_ci"] = row.defined
                           ? nlohmann::ordered_json::array({row.delta_lower, row.delta_upper})
                           : nlohmann::ordered_json(nullptr);
    item["boot_ci"] = row.has_boot
                          ? nlohmann::ordered_json::array({row.boot_lower, row.boot_upper})
                          : nlohmann::ordered_json(nullptr);
    rows.push_back(std::move(item));
  }
  j["results"] = rows;
  return j;
}

inline std::string render_json(const AnalysisResult& r) { return to_json(r).dump(2) + "\n"; }

}  // namespace medprod
