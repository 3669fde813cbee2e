// Command-line driver: analyze a dataset, run a Monte Carlo scenario, or
// sweep a scenario across outcome prevalences.

#include <CLI11.hpp>

#include <medprod/analysis.hpp>
#include <medprod/csvio.hpp>
#include <medprod/simulation.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

int exit_code_for(medprod::errc code) {
  using medprod::errc;
  switch (code) {
    case errc::file_not_found:
    case errc::missing_column:
    case errc::non_numeric_cell:
    case errc::missing_value:
    case errc::non_binary_value:
    case errc::invalid_argument:
    case errc::invalid_flavor:
    case errc::io_error:
    case errc::node_count:
      return 2;  // bad input or configuration
    case errc::rank_deficient:
    case errc::separation:
    case errc::non_convergence:
    case errc::missing_sigma2:
    case errc::non_finite_gradient:
      return 3;  // model fitting failed
    case errc::bootstrap_instability:
      return 4;
    case errc::solver_failure:
    case errc::too_many_failures:
      return 5;
  }
  return 1;
}

struct AnalyzeArgs {
  medprod::AnalysisConfig cfg;
  std::string json_path;
};

struct StudyArgs {
  std::string scenario_path;
  std::string out_path;
  int threads = 1;
  bool timing = false;
};

void print_scenario_diagnostics(const medprod::SimulationMetrics& m) {
  std::fprintf(stderr, "scenario %s: case %d, n=%ld, %ld replications",
               m.scenario_id.c_str(), medprod::case_number(m.case_type),
               static_cast<long>(m.n), static_cast<long>(m.replications));
  if (std::isfinite(m.mean_outcome_events))
    std::fprintf(stderr, ", mean outcome events %.1f", m.mean_outcome_events);
  std::fprintf(stderr, "\n");
  for (const auto& fm : m.per_flavor)
    std::fprintf(stderr, "  %-12s failed replicates: %ld\n",
                 medprod::flavor_name(fm.flavor), static_cast<long>(fm.n_failed));
}

int run_analyze(const AnalyzeArgs& args) {
  medprod::AnalysisResult result = medprod::analyze(args.cfg);
  std::fputs(medprod::render_table(result).c_str(), stdout);
  if (!args.json_path.empty())
    medprod::write_text_file_atomic(args.json_path, medprod::render_json(result));
  std::fprintf(stderr,
               "fit: outcome model %s in %d iterations, mediator model %s in %d iterations\n",
               result.outcome_model.converged ? "converged" : "did not converge",
               result.outcome_model.iterations,
               result.mediator_model.converged ? "converged" : "did not converge",
               result.mediator_model.iterations);
  return 0;
}

int run_simulate(const StudyArgs& args) {
  medprod::ScenarioFile doc = medprod::parse_scenario_file(args.scenario_path);
  doc.scenario.validate();
  medprod::SimulationMetrics metrics = medprod::run_scenario(doc.scenario, args.threads);
  print_scenario_diagnostics(metrics);
  std::vector<medprod::SweepRow> rows(1);
  rows[0].prevalence = metrics.prevalence;
  rows[0].metrics = metrics;
  medprod::write_metrics_csv(args.out_path, rows, args.timing);
  std::fprintf(stderr, "wrote %s\n", args.out_path.c_str());
  return 0;
}

int run_sweep(const StudyArgs& args) {
  medprod::ScenarioFile doc = medprod::parse_scenario_file(args.scenario_path);
  if (doc.prevalences.empty())
    medprod::fail(medprod::errc::invalid_argument,
                  "sweep requires a 'prevalences' key in the scenario file");
  doc.scenario.validate();
  std::vector<medprod::SweepRow> rows =
      medprod::prevalence_sweep(doc.scenario, doc.prevalences, args.threads);
  for (const auto& row : rows) {
    if (row.error.empty()) {
      print_scenario_diagnostics(row.metrics);
    } else {
      std::fprintf(stderr, "prevalence %.6g failed: %s\n", row.prevalence,
                   row.error.c_str());
    }
  }
  medprod::write_metrics_csv(args.out_path, rows, args.timing);
  std::fprintf(stderr, "wrote %s\n", args.out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-method mediation measures: analysis and simulation"};
  app.require_subcommand(1);

  AnalyzeArgs an;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "Estimate NIE, TE, and mediation proportion from a CSV dataset");
  analyze->add_option("--data", an.cfg.data_path, "CSV file with a header row")->required();
  analyze->add_option("--outcome", an.cfg.outcome, "outcome column name")->required();
  analyze->add_option("--mediator", an.cfg.mediator, "mediator column name")->required();
  analyze->add_option("--exposure", an.cfg.exposure, "exposure column name")->required();
  analyze->add_flag("--binary-outcome", an.cfg.binary_outcome,
                    "treat the outcome as binary (logistic outcome model)");
  analyze->add_flag("--binary-mediator", an.cfg.binary_mediator,
                    "treat the mediator as binary (logistic mediator model)");
  analyze->add_option("--covariates-outcome", an.cfg.covariates_outcome,
                      "outcome-model covariate columns (comma separated)")
      ->delimiter(',');
  analyze->add_option("--covariates-mediator", an.cfg.covariates_mediator,
                      "mediator-model covariate columns (comma separated)")
      ->delimiter(',');
  analyze->add_option("--x0", an.cfg.x0, "reference exposure level (default 0)");
  analyze->add_option("--x1", an.cfg.x1, "comparison exposure level (default 1)");
  analyze->add_option("--c-outcome", an.cfg.c_outcome,
                      "values at which outcome-model covariates are held (default zeros)")
      ->delimiter(',');
  analyze->add_option("--c-mediator", an.cfg.c_mediator,
                      "values at which mediator-model covariates are held (default zeros)")
      ->delimiter(',');
  analyze->add_flag("--boot", an.cfg.boot, "add percentile bootstrap intervals");
  analyze->add_option("--boot-r", an.cfg.boot_r, "bootstrap replications (default 2000)");
  analyze->add_option("--seed", an.cfg.seed, "bootstrap seed (default 1)");
  analyze->add_option("--flavor", an.cfg.flavor,
                      "estimator flavor: both, exact, approximate, or probit");
  analyze->add_option("--threads", an.cfg.threads, "worker threads for the bootstrap");
  analyze->add_option("--json", an.json_path, "also write results as JSON to this path");

  StudyArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run one Monte Carlo scenario and write a metrics CSV");
  simulate->add_option("scenario", sim.scenario_path, "scenario file (key = value lines)")
      ->required();
  simulate->add_option("--out", sim.out_path, "metrics CSV output path")->required();
  simulate->add_option("--threads", sim.threads, "worker threads (default 1)");
  simulate->add_flag("--timing", sim.timing,
                     "record wall-clock seconds (off by default so reruns are byte-identical)");

  StudyArgs sw;
  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run a scenario across outcome prevalences (binary outcomes only)");
  sweep->add_option("scenario", sw.scenario_path,
                    "scenario file; must include a 'prevalences' key")
      ->required();
  sweep->add_option("--out", sw.out_path, "metrics CSV output path")->required();
  sweep->add_option("--threads", sw.threads, "worker threads (default 1)");
  sweep->add_flag("--timing", sw.timing,
                  "record wall-clock seconds (off by default so reruns are byte-identical)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are an input error; --help is not
  }

  try {
    if (analyze->parsed()) return run_analyze(an);
    if (simulate->parsed()) return run_simulate(sim);
    return run_sweep(sw);
  } catch (const medprod::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
