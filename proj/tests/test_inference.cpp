#include <catch2/catch_amalgamated.hpp>

#include <medprod/glm.hpp>
#include <medprod/inference.hpp>
#include <medprod/measures.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace medprod;

namespace {

Dataset make_case1_data(int n, std::uint64_t seed, double beta2 = 0.7) {
  std::mt19937_64 rng = testoracle::test_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  Dataset d;
  d.y.resize(n);
  d.x.resize(n);
  d.m.resize(n);
  d.w.resize(n, 0);
  for (int i = 0; i < n; ++i) {
    d.x[i] = unif(rng) < 0.5 ? 1.0 : 0.0;
    d.m[i] = 0.2 + 0.8 * d.x[i] + norm(rng);
    d.y[i] = 1.0 + 0.5 * d.x[i] + beta2 * d.m[i] + norm(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("delta variance is exact for linear functionals") {
  ThetaEstimate est;
  est.theta.resize(3);
  est.theta << 0.5, -1.0, 2.0;
  est.cov.resize(3, 3);
  est.cov << 0.04, 0.01, 0.00,
             0.01, 0.09, -0.02,
             0.00, -0.02, 0.25;
  est.layout = ThetaLayout{3, 0, false};

  Eigen::Vector3d c(1.5, -0.3, 0.7);
  const double v = delta_variance([&](const Eigen::VectorXd& t) { return c.dot(t); }, est);
  const double expected = c.transpose() * est.cov * c;
  CHECK(v == Catch::Approx(expected).epsilon(1e-9));
}

TEST_CASE("delta variance for a product matches the analytic gradient") {
  ThetaEstimate est;
  est.theta.resize(2);
  est.theta << 0.7, 0.8;
  est.cov.resize(2, 2);
  est.cov << 0.010, 0.002,
             0.002, 0.020;
  est.layout = ThetaLayout{2, 0, false};
  const double v =
      delta_variance([](const Eigen::VectorXd& t) { return t[0] * t[1]; }, est);
  // grad = (t1, t0); v = t1^2 s00 + 2 t0 t1 s01 + t0^2 s11
  const double expected = 0.8 * 0.8 * 0.010 + 2.0 * 0.7 * 0.8 * 0.002 + 0.7 * 0.7 * 0.020;
  CHECK(v == Catch::Approx(expected).epsilon(1e-7));
}

TEST_CASE("delta variance rejects non-finite gradients") {
  ThetaEstimate est;
  est.theta = Eigen::VectorXd::Zero(1);
  est.cov = Eigen::MatrixXd::Identity(1, 1);
  est.layout = ThetaLayout{1, 0, false};
  try {
    delta_variance([](const Eigen::VectorXd& t) { return std::sqrt(t[0] - 1.0); }, est);
    FAIL("NaN values must be rejected");
  } catch (const error& e) {
    CHECK(e.code() == errc::non_finite_gradient);
  }
}

TEST_CASE("delta interval uses the frozen normal quantile") {
  const IntervalEstimate ci = delta_interval(0.437, 0.073);
  CHECK(ci.lower == Catch::Approx(0.29392262912857603).margin(1e-12));
  CHECK(ci.upper == Catch::Approx(0.580077370871424).margin(1e-12));
  REQUIRE(ci.se.has_value());
  CHECK(*ci.se == 0.073);
  CHECK(ci.method == IntervalMethod::delta);
  CHECK(ci.level == 0.95);

  const IntervalEstimate wide = delta_interval(0.0, 1.0, 0.99);
  CHECK(wide.upper == Catch::Approx(2.5758293035489004).margin(1e-9));
}

TEST_CASE("type-7 quantiles match the reference implementation") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(quantile_type7(v, 0.025) == Catch::Approx(1.225).margin(1e-12));
  CHECK(quantile_type7(v, 0.5) == Catch::Approx(5.5).margin(1e-12));
  CHECK(quantile_type7(v, 0.975) == Catch::Approx(9.775).margin(1e-12));
  CHECK(quantile_type7(v, 0.0) == 1.0);
  CHECK(quantile_type7(v, 1.0) == 10.0);

  std::vector<double> w{1, 1, 2, 3, 4, 5, 6, 9};
  CHECK(quantile_type7(w, 0.025) == Catch::Approx(1.0).margin(1e-12));
  CHECK(quantile_type7(w, 0.25) == Catch::Approx(1.75).margin(1e-12));
  CHECK(quantile_type7(w, 0.5) == Catch::Approx(3.5).margin(1e-12));
  CHECK(quantile_type7(w, 0.975) == Catch::Approx(8.475000000000001).margin(1e-12));

  std::vector<double> one{42.0};
  CHECK(quantile_type7(one, 0.3) == 42.0);
}

TEST_CASE("bootstrap covers the truth on a well-behaved dataset") {
  const Dataset d = make_case1_data(400, 31);
  MediationRequest req;  // exact flavor, contrast 0 -> 1
  BootstrapConfig cfg;
  cfg.replications = 400;
  cfg.seed = 9;

  const BootstrapResult r = percentile_bootstrap(d, req, cfg);
  // truth: nie = 0.7 * 0.8 = 0.56, te = 1.06
  CHECK(r.nie.lower < 0.56);
  CHECK(r.nie.upper > 0.56);
  CHECK(r.te.lower < 1.06);
  CHECK(r.te.upper > 1.06);
  CHECK(r.mp.defined);
  CHECK(r.mp.lower > 0.0);
  CHECK(r.mp.upper < 1.0);
  CHECK(r.nie.method == IntervalMethod::percentile_bootstrap);
  CHECK_FALSE(r.nie.se.has_value());  // percentile bootstrap reports no dispersion
  // the point estimate is the full-data statistic, not a resample average
  const FittedOutcome out = fit_outcome_model(d);
  const FittedMediator med = fit_mediator_model(d);
  const ThetaEstimate est = assemble_theta(out, med, false);
  const MeasureSet full = evaluate_measures(CaseType::c1, est.theta, est.layout, req);
  CHECK(r.nie.point == full.nie);
}

TEST_CASE("bootstrap is deterministic and schedule-independent") {
  const Dataset d = make_case1_data(250, 32);
  MediationRequest req;
  BootstrapConfig cfg;
  cfg.replications = 300;
  cfg.seed = 77;

  const BootstrapResult serial = percentile_bootstrap(d, req, cfg);
  const BootstrapResult again = percentile_bootstrap(d, req, cfg);
  const BootstrapResult parallel = percentile_bootstrap(d, req, cfg, 0.95,
                                                        CovarianceKind::sandwich, 4);
  CHECK(serial.nie.lower == again.nie.lower);
  CHECK(serial.nie.upper == again.nie.upper);
  CHECK(serial.mp.lower == again.mp.lower);
  CHECK(serial.nie.lower == parallel.nie.lower);
  CHECK(serial.nie.upper == parallel.nie.upper);
  CHECK(serial.te.lower == parallel.te.lower);
  CHECK(serial.mp.upper == parallel.mp.upper);

  BootstrapConfig other = cfg;
  other.seed = 78;
  const BootstrapResult moved = percentile_bootstrap(d, req, other);
  CHECK(moved.nie.lower != serial.nie.lower);
}

TEST_CASE("degenerate outcome collapses the indirect-effect interval to a point") {
  // y is an exact linear function of x alone, so beta2-hat is 0 in every
  // resample and the percentile interval for NIE is [0, 0].
  std::mt19937_64 rng = testoracle::test_rng(33);
  std::normal_distribution<double> norm(0.0, 1.0);
  Dataset d;
  const int n = 120;
  d.y.resize(n);
  d.x.resize(n);
  d.m.resize(n);
  d.w.resize(n, 0);
  for (int i = 0; i < n; ++i) {
    d.x[i] = i % 2 == 0 ? 0.0 : 1.0;
    d.m[i] = 0.5 * d.x[i] + norm(rng);
    d.y[i] = 1.0 + 2.0 * d.x[i];
  }
  MediationRequest req;
  BootstrapConfig cfg;
  cfg.replications = 200;
  cfg.seed = 4;
  const BootstrapResult r = percentile_bootstrap(d, req, cfg);
  CHECK(std::fabs(r.nie.lower) < 1e-10);
  CHECK(std::fabs(r.nie.upper) < 1e-10);
  CHECK(r.te.lower == Catch::Approx(2.0).margin(1e-10));
  CHECK(r.te.upper == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("undefined full-data MP disables only the MP interval") {
  // A null exposure contrast makes every measure exactly zero, so TE sits
  // under the definedness guard in the full data and in every resample. The
  // bootstrap must still deliver NIE/TE intervals and flag MP as undefined
  // instead of failing replicates.
  const Dataset d = make_case1_data(150, 34);
  MediationRequest req;
  req.x_star = 1.0;
  req.x_new = 1.0;
  BootstrapConfig cfg;
  cfg.replications = 100;
  cfg.seed = 6;
  const BootstrapResult r = percentile_bootstrap(d, req, cfg);
  CHECK_FALSE(r.mp.defined);
  CHECK(r.nie.point == 0.0);
  CHECK(r.nie.lower == 0.0);
  CHECK(r.nie.upper == 0.0);
  CHECK(r.te.lower == 0.0);
  CHECK(r.total_redraws == 0);
}

TEST_CASE("separate outcome and mediator views resample coherently") {
  const Dataset base = make_case1_data(300, 35);
  Dataset with_cov = base;
  with_cov.w.resize(base.n(), 1);
  std::mt19937_64 wrng = testoracle::test_rng(99);
  std::normal_distribution<double> wnoise(0.0, 1.0);
  for (Eigen::Index i = 0; i < base.n(); ++i) with_cov.w(i, 0) = wnoise(wrng);

  MediationRequest req_out;  // outcome model carries one covariate
  req_out.w_outcome = Eigen::VectorXd::Zero(1);
  BootstrapConfig cfg;
  cfg.replications = 150;
  cfg.seed = 12;
  const std::vector<BootstrapResult> r =
      percentile_bootstrap_multi(with_cov, base, {req_out}, cfg);
  REQUIRE(r.size() == 1);
  CHECK(std::isfinite(r[0].nie.lower));
  CHECK(r[0].nie.lower < r[0].nie.upper);

  // passing the same object twice must match passing two equal copies
  Dataset copy = base;
  MediationRequest plain;
  const std::vector<BootstrapResult> shared =
      percentile_bootstrap_multi(base, base, {plain}, cfg);
  const std::vector<BootstrapResult> split =
      percentile_bootstrap_multi(base, copy, {plain}, cfg);
  CHECK(shared[0].nie.lower == split[0].nie.lower);
  CHECK(shared[0].nie.upper == split[0].nie.upper);
  CHECK(shared[0].mp.upper == split[0].mp.upper);
}

TEST_CASE("bootstrap propagates configuration errors from the full-data fit") {
  const Dataset d = make_case1_data(100, 36);
  MediationRequest bad;
  bad.flavor = Flavor::probit;  // inadmissible for a continuous outcome
  BootstrapConfig cfg;
  cfg.replications = 50;
  try {
    percentile_bootstrap(d, bad, cfg);
    FAIL("must throw invalid_flavor, not bootstrap_instability");
  } catch (const error& e) {
    CHECK(e.code() == errc::invalid_flavor);
  }
}

TEST_CASE("unstable resampling exhausts the retry budget and throws") {
  // Binary outcome with a nearly-deterministic exposure split: many resamples
  // are separated, so refits fail far more often than the 1% budget allows.
  // Full data is NOT separated (each exposure arm holds both outcomes, with
  // the discordant rows placed so no linear boundary works), but resamples
  // that drop row 0 or row 6 often are.
  Dataset d;
  const int n = 12;
  d.y.resize(n);
  d.x.resize(n);
  d.m.resize(n);
  d.w.resize(n, 0);
  d.y_binary = true;
  for (int i = 0; i < n; ++i) {
    d.x[i] = i < 6 ? 0.0 : 1.0;
    d.m[i] = i * 0.25 - 1.0;
    d.y[i] = (i == 0 || i >= 7) ? 1.0 : 0.0;
  }
  MediationRequest req;
  req.flavor = Flavor::approximate;
  BootstrapConfig cfg;
  cfg.replications = 200;
  cfg.seed = 3;
  try {
    percentile_bootstrap(d, req, cfg);
    FAIL("must throw");
  } catch (const error& e) {
    CHECK(e.code() == errc::bootstrap_instability);
  }
}

TEST_CASE("replications = 1 yields a degenerate but valid interval") {
  const Dataset d = make_case1_data(200, 37);
  MediationRequest req;
  BootstrapConfig cfg;
  cfg.replications = 1;
  cfg.seed = 2;
  const BootstrapResult r = percentile_bootstrap(d, req, cfg);
  CHECK(r.nie.lower == r.nie.upper);  // single resample: both quantiles equal it
  CHECK(std::isfinite(r.nie.lower));
}
