// Interval machinery: multivariate delta method with a finite-difference
// gradient, and a percentile bootstrap whose replicate streams depend only on
// (seed, replicate, attempt) so results are independent of thread schedule.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "medprod/dataset.hpp"
#include "medprod/glm.hpp"
#include "medprod/measures.hpp"
#include "medprod/parallel.hpp"
#include "medprod/rng.hpp"

namespace medprod {

enum class IntervalMethod { delta, percentile_bootstrap };

struct IntervalEstimate {
  double point = kNaN;
  std::optional<double> se;  // delta only; the bootstrap reports no dispersion
  double lower = kNaN;
  double upper = kNaN;
  IntervalMethod method = IntervalMethod::delta;
  double level = 0.95;
  bool defined = true;  // false when the underlying measure (MP near TE = 0) is undefined
};

// Central differences with a step scaled to the coordinate, h_j = 1e-5 max(1, |theta_j|).
template <typename F>
double delta_variance(F&& f, const ThetaEstimate& est) {
  const Eigen::Index d = est.theta.size();
  require(d > 0 && est.cov.rows() == d && est.cov.cols() == d, errc::invalid_argument,
          "delta_variance: estimate and covariance sizes disagree");
  Eigen::VectorXd grad(d);
  Eigen::VectorXd th = est.theta;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = 1e-5 * std::max(1.0, std::fabs(est.theta[j]));
    th[j] = est.theta[j] + h;
    const double up = f(th);
    th[j] = est.theta[j] - h;
    const double down = f(th);
    th[j] = est.theta[j];
    grad[j] = (up - down) / (2.0 * h);
    require(std::isfinite(grad[j]), errc::non_finite_gradient,
            "delta_variance: non-finite finite-difference gradient");
  }
  const double v = grad.dot(est.cov * grad);
  return v > 0.0 ? v : 0.0;  // clamp tiny negative values from rounding
}

inline IntervalEstimate delta_interval(double point, double se, double level = 0.95) {
  require(std::isfinite(se) && se >= 0.0, errc::invalid_argument, "delta_interval: bad se");
  require(level > 0.0 && level < 1.0, errc::invalid_argument, "delta_interval: bad level");
  IntervalEstimate est;
  est.point = point;
  est.se = se;
  const double z = z_for_level(level);
  est.lower = point - z * se;
  est.upper = point + z * se;
  est.method = IntervalMethod::delta;
  est.level = level;
  return est;
}

template <typename F>
IntervalEstimate delta_interval(F&& f, const ThetaEstimate& est, double level = 0.95) {
  const double point = f(est.theta);
  require(std::isfinite(point), errc::invalid_argument, "delta_interval: non-finite point estimate");
  return delta_interval(point, std::sqrt(delta_variance(f, est)), level);
}

// Quantile by linear interpolation of order statistics (the n-1 convention):
// h = (n-1)q, value = s[floor h] + frac * (s[floor h + 1] - s[floor h]).
inline double quantile_type7(const std::vector<double>& sorted, double q) {
  require(!sorted.empty(), errc::invalid_argument, "quantile_type7: empty sample");
  require(q >= 0.0 && q <= 1.0, errc::invalid_argument, "quantile_type7: q outside [0, 1]");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct BootstrapConfig {
  int replications = 2000;
  std::uint64_t seed = 1;
  double max_retry_fraction = 0.01;  // redraw budget as a fraction of replications
};

struct BootstrapResult {
  IntervalEstimate nie, te, mp;
  int total_redraws = 0;
};

namespace detail {

struct BootStat {
  double nie = kNaN, te = kNaN, mp = kNaN;
};

inline Dataset take_rows(const Dataset& d, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Dataset out;
  out.y.resize(n);
  out.x.resize(n);
  out.m.resize(n);
  out.w.resize(n, d.p());
  out.y_binary = d.y_binary;
  out.m_binary = d.m_binary;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = idx[static_cast<std::size_t>(i)];
    out.y[i] = d.y[j];
    out.x[i] = d.x[j];
    out.m[i] = d.m[j];
    if (d.p() > 0) out.w.row(i) = d.w.row(j);
  }
  return out;
}

}  // namespace detail

// One resample pass serving several flavor requests at once: each replicate
// draws indices from Stream(derive_seed(seed, replicate, attempt)), refits both
// models, and must yield finite NIE/TE (and a defined MP wherever the full-data
// MP is defined) for every request, else the attempt is redrawn. Replicates are
// numbered from 1; results are bit-identical for any thread count.
//
// The outcome and mediator models may carry different covariate blocks, hence
// the two dataset views; they must describe the same records so one index draw
// resamples both coherently.
inline std::vector<BootstrapResult> percentile_bootstrap_multi(
    const Dataset& outcome_data, const Dataset& mediator_data,
    const std::vector<MediationRequest>& requests, const BootstrapConfig& cfg,
    double level = 0.95, CovarianceKind kind = CovarianceKind::sandwich, int threads = 1) {
  require(!requests.empty(), errc::invalid_argument, "percentile_bootstrap: no requests");
  require(cfg.replications >= 1, errc::invalid_argument,
          "percentile_bootstrap: replications must be >= 1");
  require(cfg.max_retry_fraction >= 0.0, errc::invalid_argument,
          "percentile_bootstrap: negative retry budget");
  require(level > 0.0 && level < 1.0, errc::invalid_argument, "percentile_bootstrap: bad level");
  const bool shared_views = &outcome_data == &mediator_data;
  require(shared_views || (outcome_data.n() == mediator_data.n() &&
                           outcome_data.y_binary == mediator_data.y_binary &&
                           outcome_data.m_binary == mediator_data.m_binary),
          errc::invalid_argument, "percentile_bootstrap: dataset views disagree");

  const CaseType c = case_of(outcome_data);
  bool want_sigma2 = false;
  for (const auto& req : requests) want_sigma2 = want_sigma2 || needs_sigma2(c, req.flavor);

  const std::size_t n_req = requests.size();
  const auto fit_eval = [&](const Dataset& d_out, const Dataset& d_med) {
    const FittedOutcome out = fit_outcome_model(d_out, kind);
    const FittedMediator med = fit_mediator_model(d_med, kind);
    const ThetaEstimate est = assemble_theta(out, med, want_sigma2);
    std::vector<MeasureSet> sets(n_req);
    for (std::size_t k = 0; k < n_req; ++k)
      sets[k] = evaluate_measures(c, est.theta, est.layout, requests[k]);
    return sets;
  };

  const std::vector<MeasureSet> full = fit_eval(outcome_data, mediator_data);
  std::vector<char> mp_required(n_req);
  for (std::size_t k = 0; k < n_req; ++k) mp_required[k] = full[k].mp_defined ? 1 : 0;

  const int r_total = cfg.replications;
  const double budget = cfg.max_retry_fraction * static_cast<double>(r_total);
  const int attempt_cap =
      std::max(3, static_cast<int>(std::ceil(budget)) + 1);

  std::vector<std::vector<detail::BootStat>> slots(
      static_cast<std::size_t>(r_total), std::vector<detail::BootStat>(n_req));
  std::vector<int> failures(static_cast<std::size_t>(r_total), 0);
  std::vector<char> succeeded(static_cast<std::size_t>(r_total), 0);

  const auto n_records = static_cast<std::uint64_t>(outcome_data.n());
  parallel_for(static_cast<std::size_t>(r_total), threads, [&](std::size_t i) {
    const std::uint64_t replicate = static_cast<std::uint64_t>(i) + 1;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n_records));
    for (int attempt = 0; attempt < attempt_cap; ++attempt) {
      Stream stream(derive_seed(cfg.seed, replicate, static_cast<std::uint64_t>(attempt)));
      bool ok = true;
      try {
        for (auto& j : idx) j = static_cast<Eigen::Index>(stream.index(n_records));
        const Dataset boot_out = detail::take_rows(outcome_data, idx);
        const std::vector<MeasureSet> sets =
            shared_views ? fit_eval(boot_out, boot_out)
                         : fit_eval(boot_out, detail::take_rows(mediator_data, idx));
        for (std::size_t k = 0; k < n_req; ++k) {
          const MeasureSet& ms = sets[k];
          if (!std::isfinite(ms.nie) || !std::isfinite(ms.te) ||
              (mp_required[k] && !ms.mp_defined)) {
            ok = false;
            break;
          }
          slots[i][k] = {ms.nie, ms.te, ms.mp};
        }
      } catch (const error&) {
        ok = false;
      }
      if (ok) {
        succeeded[i] = 1;
        return;
      }
      ++failures[i];
    }
  });

  long total_failures = 0;
  for (int f : failures) total_failures += f;
  bool all_ok = true;
  for (char s : succeeded) all_ok = all_ok && (s != 0);
  if (!all_ok || static_cast<double>(total_failures) > budget)
    fail(errc::bootstrap_instability,
         "percentile_bootstrap: resample refits failed beyond the retry budget");

  const double q_lo = (1.0 - level) / 2.0;
  const double q_hi = 1.0 - q_lo;
  std::vector<BootstrapResult> results(n_req);
  std::vector<double> acc(static_cast<std::size_t>(r_total));
  for (std::size_t k = 0; k < n_req; ++k) {
    BootstrapResult& res = results[k];
    res.total_redraws = static_cast<int>(total_failures);
    auto interval = [&](auto pick, double point, bool defined) {
      IntervalEstimate est;
      est.method = IntervalMethod::percentile_bootstrap;
      est.level = level;
      est.point = point;
      est.defined = defined;
      if (!defined) return est;
      for (std::size_t i = 0; i < slots.size(); ++i) acc[i] = pick(slots[i][k]);
      std::sort(acc.begin(), acc.end());
      est.lower = quantile_type7(acc, q_lo);
      est.upper = quantile_type7(acc, q_hi);
      return est;
    };
    res.nie = interval([](const detail::BootStat& s) { return s.nie; }, full[k].nie, true);
    res.te = interval([](const detail::BootStat& s) { return s.te; }, full[k].te, true);
    res.mp = interval([](const detail::BootStat& s) { return s.mp; }, full[k].mp,
                      full[k].mp_defined);
  }
  return results;
}

inline std::vector<BootstrapResult> percentile_bootstrap_multi(
    const Dataset& data, const std::vector<MediationRequest>& requests,
    const BootstrapConfig& cfg, double level = 0.95,
    CovarianceKind kind = CovarianceKind::sandwich, int threads = 1) {
  return percentile_bootstrap_multi(data, data, requests, cfg, level, kind, threads);
}

inline BootstrapResult percentile_bootstrap(const Dataset& data, const MediationRequest& request,
                                            const BootstrapConfig& cfg, double level = 0.95,
                                            CovarianceKind kind = CovarianceKind::sandwich,
                                            int threads = 1) {
  return percentile_bootstrap_multi(data, data, {request}, cfg, level, kind, threads)[0];
}

}  // namespace medprod
