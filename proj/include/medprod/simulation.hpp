// Monte Carlo harness: solve model coefficients from (TE, MP, prevalence,
// correlation) targets, generate replicate datasets, and summarize estimator
// behavior as median percent bias, CI coverage, and variance ratios. Every
// replicate's randomness derives only from (seed, rep_index), so metrics are
// bit-identical for any thread count.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "medprod/dataset.hpp"
#include "medprod/glm.hpp"
#include "medprod/inference.hpp"
#include "medprod/measures.hpp"
#include "medprod/parallel.hpp"
#include "medprod/rng.hpp"

namespace medprod {

// Stream-purpose salts: the data stream and the per-replicate bootstrap seed
// must never collide even though both derive from (scenario seed, rep_index).
inline constexpr std::uint64_t salt_data = 1;
inline constexpr std::uint64_t salt_boot = 2;

struct SimulationScenario {
  std::string id = "scenario";
  CaseType case_type = CaseType::c1;
  int n = 0;
  double te_target = 0.0;
  double mp_target = 0.0;
  double baseline_outcome_prev = 0.03;   // binary-outcome cases
  double baseline_mediator_prev = 0.2;   // binary-mediator cases
  double xm_correlation = 0.2;
  double error_skewness = 0.0;           // mediator-error skewness; binary-outcome/continuous-mediator case only
  int replications = 0;
  std::uint64_t seed = 1;
  std::optional<BootstrapConfig> bootstrap;  // per-replicate bootstrap when present
  std::vector<Flavor> flavors;               // empty -> per-case defaults
  int ghq_nodes = 40;

  void validate() const {
    require(n >= 1, errc::invalid_argument, "scenario: n must be a positive record count");
    require(replications >= 1, errc::invalid_argument,
            "scenario: replications must be a positive integer");
    require(std::isfinite(te_target) && te_target != 0.0, errc::invalid_argument,
            "scenario: te_target must be finite and nonzero");
    require(mp_target > 0.0 && mp_target < 1.0, errc::invalid_argument,
            "scenario: mp_target must lie in (0, 1)");
    require(baseline_outcome_prev > 0.0 && baseline_outcome_prev < 1.0, errc::invalid_argument,
            "scenario: baseline_outcome_prev must lie in (0, 1)");
    require(baseline_mediator_prev > 0.0 && baseline_mediator_prev < 1.0, errc::invalid_argument,
            "scenario: baseline_mediator_prev must lie in (0, 1)");
    require(xm_correlation > 0.0 && xm_correlation < 1.0, errc::invalid_argument,
            "scenario: xm_correlation must lie in (0, 1)");
    require(std::isfinite(error_skewness) && error_skewness >= 0.0, errc::invalid_argument,
            "scenario: error_skewness must be >= 0");
    require(error_skewness == 0.0 || case_type == CaseType::c3, errc::invalid_argument,
            "scenario: error_skewness > 0 applies only to the binary-outcome/continuous-mediator case");
    require(ghq_nodes >= 2, errc::invalid_argument, "scenario: ghq_nodes must be >= 2");
    if (bootstrap) {
      require(bootstrap->replications >= 1, errc::invalid_argument,
              "scenario: bootstrap replications must be >= 1");
      require(bootstrap->max_retry_fraction >= 0.0, errc::invalid_argument,
              "scenario: bootstrap retry fraction must be >= 0");
    }
    for (Flavor f : flavors)
      require(flavor_admissible(case_type, f), errc::invalid_flavor,
              std::string("scenario: flavor '") + flavor_name(f) + "' not available for this case");
  }
};

struct DesignParams {
  double beta0 = 0.0, beta1 = 0.0, beta2 = 0.0;
  double gamma0 = 0.0, gamma1 = 0.0;
  std::optional<double> sigma2;  // continuous-mediator cases
};

// Point-estimation flavors evaluated per replicate when the scenario does not
// name any: the closed-form cases have only the exact flavor, binary-outcome
// cases compare approximate vs exact.
inline std::vector<Flavor> default_flavors(CaseType c) {
  switch (c) {
    case CaseType::c1:
    case CaseType::c2: return {Flavor::exact};
    case CaseType::c3:
    case CaseType::c4: return {Flavor::approximate, Flavor::exact};
  }
  fail(errc::invalid_argument, "default_flavors: unknown case");
}

// Prevalence sweeps additionally carry the probit shortcut where it exists.
inline std::vector<Flavor> sweep_flavors(CaseType c) {
  if (c == CaseType::c3) return {Flavor::approximate, Flavor::exact, Flavor::probit};
  return {Flavor::approximate, Flavor::exact};
}

namespace detail {

// With X ~ Bernoulli(1/2) and unit error variance, Corr(X, M) = (g1/2)/sqrt(g1^2/4 + 1).
inline double gamma1_for_corr_continuous(double corr) {
  return 2.0 * corr / std::sqrt(1.0 - corr * corr);
}

// Binary mediator: point-biserial correlation
// (p1 - p0) / (2 sqrt(pbar (1 - pbar))), pbar = (p0 + p1)/2, solved by bisection.
inline double gamma1_for_corr_binary(double gamma0, double corr) {
  const double p0 = expit(gamma0);
  auto f = [&](double g1) {
    const double p1 = expit(gamma0 + g1);
    const double pbar = 0.5 * (p0 + p1);
    return (p1 - p0) / (2.0 * std::sqrt(pbar * (1.0 - pbar))) - corr;
  };
  double lo = 0.0, hi = 50.0;
  require(f(lo) < 0.0 && f(hi) > 0.0, errc::solver_failure,
          "solve_design: correlation target unreachable for the binary mediator");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Exact-flavor (NIE, NDE) at candidate outcome coefficients, evaluated through
// the same measure code the estimators use so the round-trip is tautological.
inline std::pair<double, double> design_effects(CaseType c, const DesignParams& dp, double beta1,
                                                double beta2, int ghq_nodes) {
  ThetaLayout layout;
  layout.n_beta = 3;
  layout.n_gamma = 2;
  layout.has_sigma2 = dp.sigma2.has_value();
  Eigen::VectorXd theta(layout.dim());
  theta << dp.beta0, beta1, beta2, dp.gamma0, dp.gamma1;
  if (dp.sigma2) theta[layout.dim() - 1] = *dp.sigma2;
  MediationRequest req;
  req.flavor = Flavor::exact;
  req.ghq_nodes = ghq_nodes;
  const MeasureSet ms = evaluate_measures(c, theta, layout, req);
  return {ms.nie, ms.nde};
}

// Damped Newton on the 2-vector residual (NIE - mp*te, NDE - (1-mp)*te) over
// (beta1, beta2), numerical Jacobian, step halving when the residual does not
// shrink. Initialized at the rare-outcome closed forms.
inline void solve_outcome_coefs(CaseType c, DesignParams& dp, double te, double mp,
                                double beta2_init, int ghq_nodes) {
  const double nie_t = mp * te;
  const double nde_t = (1.0 - mp) * te;
  Eigen::Vector2d v(nde_t, beta2_init);
  auto resid = [&](const Eigen::Vector2d& u) {
    const auto [nie, nde] = design_effects(c, dp, u[0], u[1], ghq_nodes);
    return Eigen::Vector2d(nie - nie_t, nde - nde_t);
  };
  Eigen::Vector2d r = resid(v);
  double rn = r.lpNorm<Eigen::Infinity>();
  bool converged = rn <= 1e-11;
  for (int iter = 0; iter < 200 && !converged; ++iter) {
    Eigen::Matrix2d jac;
    for (int j = 0; j < 2; ++j) {
      const double h = 1e-6 * std::max(1.0, std::fabs(v[j]));
      Eigen::Vector2d up = v, down = v;
      up[j] += h;
      down[j] -= h;
      jac.col(j) = (resid(up) - resid(down)) / (2.0 * h);
    }
    Eigen::Vector2d step = jac.fullPivLu().solve(-r);
    require(step.allFinite(), errc::solver_failure,
            "solve_design: singular Jacobian in the outcome-coefficient solve");
    double t = 1.0;
    Eigen::Vector2d v_new = v + step;
    Eigen::Vector2d r_new = resid(v_new);
    for (int halving = 0; halving < 40 && !(r_new.lpNorm<Eigen::Infinity>() < rn); ++halving) {
      t *= 0.5;
      v_new = v + t * step;
      r_new = resid(v_new);
    }
    v = v_new;
    r = r_new;
    rn = r.lpNorm<Eigen::Infinity>();
    converged = rn <= 1e-11;
  }
  require(rn <= 1e-8, errc::solver_failure,
          "solve_design: outcome-coefficient solve did not reach the residual tolerance");
  dp.beta1 = v[0];
  dp.beta2 = v[1];
}

}  // namespace detail

inline DesignParams solve_design(const SimulationScenario& sc) {
  sc.validate();
  DesignParams dp;
  const double te = sc.te_target, mp = sc.mp_target;
  const bool m_binary = sc.case_type == CaseType::c2 || sc.case_type == CaseType::c4;
  const bool y_binary = sc.case_type == CaseType::c3 || sc.case_type == CaseType::c4;

  if (m_binary) {
    dp.gamma0 = logit(sc.baseline_mediator_prev);
    dp.gamma1 = detail::gamma1_for_corr_binary(dp.gamma0, sc.xm_correlation);
  } else {
    dp.gamma0 = 0.0;
    dp.gamma1 = detail::gamma1_for_corr_continuous(sc.xm_correlation);
    dp.sigma2 = 1.0;
  }

  const double mediator_shift =
      m_binary ? expit(dp.gamma0 + dp.gamma1) - expit(dp.gamma0) : dp.gamma1;
  const double beta2_rare = mp * te / mediator_shift;

  if (!y_binary) {
    dp.beta0 = 0.0;
    dp.beta1 = (1.0 - mp) * te;
    dp.beta2 = beta2_rare;
    return dp;
  }

  dp.beta0 = logit(sc.baseline_outcome_prev);
  detail::solve_outcome_coefs(sc.case_type, dp, te, mp, beta2_rare, sc.ghq_nodes);
  return dp;
}

inline Dataset generate(const SimulationScenario& sc, const DesignParams& dp,
                        std::uint64_t rep_index) {
  const bool m_binary = sc.case_type == CaseType::c2 || sc.case_type == CaseType::c4;
  const bool y_binary = sc.case_type == CaseType::c3 || sc.case_type == CaseType::c4;
  const double s = sc.error_skewness;
  const double shape = s > 0.0 ? (2.0 / s) * (2.0 / s) : 0.0;
  const double scale = s / 2.0;

  Stream stream(derive_seed(sc.seed, rep_index, salt_data));
  Dataset d;
  d.y.resize(sc.n);
  d.x.resize(sc.n);
  d.m.resize(sc.n);
  d.w.resize(sc.n, 0);
  d.y_binary = y_binary;
  d.m_binary = m_binary;
  for (int i = 0; i < sc.n; ++i) {
    const double x = stream.bernoulli(0.5) ? 1.0 : 0.0;
    double m;
    if (m_binary) {
      m = stream.bernoulli(expit(dp.gamma0 + dp.gamma1 * x)) ? 1.0 : 0.0;
    } else {
      double eps;
      if (s > 0.0) {
        const double g = stream.gamma(shape, scale);
        eps = (g - shape * scale) / (std::sqrt(shape) * scale);  // mean 0, variance 1, skewness s
      } else {
        eps = stream.normal();
      }
      m = dp.gamma0 + dp.gamma1 * x + eps;
    }
    const double lp = dp.beta0 + dp.beta1 * x + dp.beta2 * m;
    d.x[i] = x;
    d.m[i] = m;
    d.y[i] = y_binary ? (stream.bernoulli(expit(lp)) ? 1.0 : 0.0) : lp + stream.normal();
  }
  return d;
}

struct MeasureMetrics {
  double bias_percent = kNaN;
  double cr_delta = kNaN;
  std::optional<double> cr_boot;
  double variance_ratio = kNaN;  // NaN when fewer than two replicates survive
};

struct FlavorMetrics {
  Flavor flavor = Flavor::exact;
  MeasureMetrics nie, mp;
  int n_failed = 0;
};

struct SimulationMetrics {
  std::string scenario_id;
  CaseType case_type = CaseType::c1;
  int n = 0;
  int replications = 0;
  double te_target = 0.0, mp_target = 0.0;
  double prevalence = kNaN;  // baseline_outcome_prev for binary-outcome cases
  DesignParams params;
  double truth_nie = 0.0, truth_mp = 0.0;
  std::vector<FlavorMetrics> per_flavor;
  double mean_outcome_events = kNaN;  // realized case count, binary outcomes only
  double wall_seconds = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sample_variance(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return kNaN;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(n - 1);
}

struct FlavorSlot {
  bool ok = false;
  double nie = kNaN, mp = kNaN;
  double var_nie = kNaN, var_mp = kNaN;
  bool hit_delta_nie = false, hit_delta_mp = false;
  bool hit_boot_nie = false, hit_boot_mp = false;
};

struct RepSlot {
  bool ok = false;  // both fits (and the bootstrap pass, when requested) succeeded
  double events = kNaN;
  std::vector<FlavorSlot> flavors;
};

}  // namespace detail

inline SimulationMetrics run_scenario(const SimulationScenario& sc, int threads = 1) {
  sc.validate();
  const DesignParams dp = solve_design(sc);
  const std::vector<Flavor> flavors = sc.flavors.empty() ? default_flavors(sc.case_type) : sc.flavors;
  const bool y_binary = sc.case_type == CaseType::c3 || sc.case_type == CaseType::c4;
  bool want_sigma2 = false;
  for (Flavor f : flavors) want_sigma2 = want_sigma2 || needs_sigma2(sc.case_type, f);

  SimulationMetrics out;
  out.scenario_id = sc.id;
  out.case_type = sc.case_type;
  out.n = sc.n;
  out.replications = sc.replications;
  out.te_target = sc.te_target;
  out.mp_target = sc.mp_target;
  out.prevalence = y_binary ? sc.baseline_outcome_prev : kNaN;
  out.params = dp;
  out.truth_nie = sc.mp_target * sc.te_target;
  out.truth_mp = sc.mp_target;

  std::vector<MediationRequest> requests(flavors.size());
  for (std::size_t k = 0; k < flavors.size(); ++k) {
    requests[k].flavor = flavors[k];
    requests[k].ghq_nodes = sc.ghq_nodes;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<detail::RepSlot> slots(static_cast<std::size_t>(sc.replications));
  parallel_for(slots.size(), threads, [&](std::size_t i) {
    detail::RepSlot& slot = slots[i];
    slot.flavors.resize(flavors.size());
    const Dataset data = generate(sc, dp, static_cast<std::uint64_t>(i));

    ThetaEstimate est;
    try {
      const FittedOutcome fo = fit_outcome_model(data);
      const FittedMediator fm = fit_mediator_model(data);
      est = assemble_theta(fo, fm, want_sigma2);
    } catch (const error&) {
      return;  // slot.ok stays false
    }
    slot.events = y_binary ? data.y.sum() : kNaN;

    bool all_flavors_ok = true;
    for (std::size_t k = 0; k < flavors.size(); ++k) {
      detail::FlavorSlot& fs = slot.flavors[k];
      const MediationRequest& req = requests[k];
      try {
        const MeasureSet ms = evaluate_measures(sc.case_type, est.theta, est.layout, req);
        require(std::isfinite(ms.nie) && ms.mp_defined, errc::invalid_argument,
                "replicate produced non-finite or undefined measures");
        auto nie_fn = [&](const Eigen::VectorXd& th) {
          return evaluate_measures(sc.case_type, th, est.layout, req).nie;
        };
        auto mp_fn = [&](const Eigen::VectorXd& th) {
          const MeasureSet m2 = evaluate_measures(sc.case_type, th, est.layout, req);
          return m2.mp_defined ? m2.mp : kNaN;
        };
        fs.nie = ms.nie;
        fs.mp = ms.mp;
        fs.var_nie = delta_variance(nie_fn, est);
        fs.var_mp = delta_variance(mp_fn, est);
        const IntervalEstimate ci_nie = delta_interval(ms.nie, std::sqrt(fs.var_nie));
        const IntervalEstimate ci_mp = delta_interval(ms.mp, std::sqrt(fs.var_mp));
        fs.hit_delta_nie = ci_nie.lower <= out.truth_nie && out.truth_nie <= ci_nie.upper;
        fs.hit_delta_mp = ci_mp.lower <= out.truth_mp && out.truth_mp <= ci_mp.upper;
        fs.ok = true;
      } catch (const error&) {
        fs.ok = false;
        all_flavors_ok = false;
      }
    }

    if (sc.bootstrap) {
      if (!all_flavors_ok) return;  // a complete bootstrap row needs every flavor's point
      BootstrapConfig cfg = *sc.bootstrap;
      cfg.seed = derive_seed(sc.seed, static_cast<std::uint64_t>(i), salt_boot);
      try {
        const std::vector<BootstrapResult> boot =
            percentile_bootstrap_multi(data, requests, cfg, 0.95, CovarianceKind::sandwich, 1);
        for (std::size_t k = 0; k < flavors.size(); ++k) {
          detail::FlavorSlot& fs = slot.flavors[k];
          fs.hit_boot_nie = boot[k].nie.lower <= out.truth_nie && out.truth_nie <= boot[k].nie.upper;
          fs.hit_boot_mp = boot[k].mp.defined && boot[k].mp.lower <= out.truth_mp &&
                           out.truth_mp <= boot[k].mp.upper;
        }
      } catch (const error&) {
        return;  // bootstrap instability fails the replicate
      }
    }
    slot.ok = true;
  });

  // Aggregation runs serially in replicate order, so reductions are deterministic.
  double events_sum = 0.0;
  int events_n = 0;
  for (const auto& slot : slots)
    if (slot.ok && std::isfinite(slot.events)) {
      events_sum += slot.events;
      ++events_n;
    }
  if (events_n > 0) out.mean_outcome_events = events_sum / events_n;

  for (std::size_t k = 0; k < flavors.size(); ++k) {
    FlavorMetrics fm;
    fm.flavor = flavors[k];
    std::vector<double> nie, mp, var_nie, var_mp;
    long hit_d_nie = 0, hit_d_mp = 0, hit_b_nie = 0, hit_b_mp = 0;
    for (const auto& slot : slots) {
      if (!slot.ok || !slot.flavors[k].ok) continue;
      const detail::FlavorSlot& fs = slot.flavors[k];
      nie.push_back(fs.nie);
      mp.push_back(fs.mp);
      var_nie.push_back(fs.var_nie);
      var_mp.push_back(fs.var_mp);
      hit_d_nie += fs.hit_delta_nie;
      hit_d_mp += fs.hit_delta_mp;
      hit_b_nie += fs.hit_boot_nie;
      hit_b_mp += fs.hit_boot_mp;
    }
    fm.n_failed = sc.replications - static_cast<int>(nie.size());
    if (static_cast<double>(fm.n_failed) > 0.05 * sc.replications)
      fail(errc::too_many_failures,
           "run_scenario: more than 5% of replications failed (" + std::to_string(fm.n_failed) +
               " of " + std::to_string(sc.replications) + ")");
    const double n_ok = static_cast<double>(nie.size());
    auto bias = [&](std::vector<double> est, double truth) {
      for (double& e : est) e = (e - truth) / truth * 100.0;
      return detail::median_of(std::move(est));
    };
    fm.nie.bias_percent = bias(nie, out.truth_nie);
    fm.mp.bias_percent = bias(mp, out.truth_mp);
    fm.nie.cr_delta = hit_d_nie / n_ok;
    fm.mp.cr_delta = hit_d_mp / n_ok;
    fm.nie.variance_ratio = detail::median_of(var_nie) / detail::sample_variance(nie);
    fm.mp.variance_ratio = detail::median_of(var_mp) / detail::sample_variance(mp);
    if (sc.bootstrap) {
      fm.nie.cr_boot = hit_b_nie / n_ok;
      fm.mp.cr_boot = hit_b_mp / n_ok;
    }
    out.per_flavor.push_back(std::move(fm));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct SweepRow {
  double prevalence = kNaN;
  SimulationMetrics metrics;  // valid only when error is empty
  std::string error;          // per-cell failure marker; sweep itself continues
};

inline std::vector<SweepRow> prevalence_sweep(const SimulationScenario& base,
                                              const std::vector<double>& prevalences,
                                              int threads = 1) {
  require(base.case_type == CaseType::c3 || base.case_type == CaseType::c4, errc::invalid_argument,
          "prevalence_sweep: only binary-outcome cases sweep the outcome prevalence");
  require(!prevalences.empty(), errc::invalid_argument, "prevalence_sweep: empty prevalence list");
  std::vector<SweepRow> rows;
  rows.reserve(prevalences.size());
  for (double prev : prevalences) {
    SweepRow row;
    row.prevalence = prev;
    SimulationScenario cell = base;
    cell.baseline_outcome_prev = prev;
    if (cell.flavors.empty()) cell.flavors = sweep_flavors(base.case_type);
    try {
      require(prev > 0.0 && prev < 1.0, errc::invalid_argument,
              "prevalence_sweep: prevalence must lie in (0, 1)");
      row.metrics = run_scenario(cell, threads);
    } catch (const error& e) {
      row.error = e.what();
      row.metrics.scenario_id = cell.id;  // keep identity for reporting
      row.metrics.case_type = cell.case_type;
      row.metrics.n = cell.n;
      row.metrics.replications = cell.replications;
      row.metrics.te_target = cell.te_target;
      row.metrics.mp_target = cell.mp_target;
      row.metrics.prevalence = prev;
      for (Flavor f : cell.flavors) {  // marker rows keep the cell's flavor shape
        FlavorMetrics fm;
        fm.flavor = f;
        fm.n_failed = cell.replications;
        row.metrics.per_flavor.push_back(fm);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace medprod
