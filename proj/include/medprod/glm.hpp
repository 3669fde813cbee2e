// GLM fitting by IRLS with both model-based and robust (sandwich) covariances,
// plus the outcome/mediator wrappers and the stacked-parameter assembly whose
// block-diagonal covariance reflects the asymptotic independence of the two fits.
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "medprod/dataset.hpp"

namespace medprod {

enum class Link { identity, logit };

enum class CovarianceKind { sandwich, model_based };

struct GlmOptions {
  int max_iterations = 100;
  double coef_tol = 1e-10;        // max |coefficient change|
  double score_tol_per_n = 1e-8;  // max |score| < score_tol_per_n * n
  double lp_guard = 30.0;         // |linear predictor| beyond this before convergence => separation
};

struct GlmFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov_model;     // inverse information (identity link: dispersion * (X'X)^-1)
  Eigen::MatrixXd cov_sandwich;  // A^-1 B A^-1
  bool converged = false;
  int iterations = 0;
  double dispersion = 1.0;  // identity link: mean squared residual (1/n) sum r^2
};

namespace detail {

inline Eigen::MatrixXd cross_meat(const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  // sum_i r_i^2 x_i x_i'
  return X.transpose() * r.array().square().matrix().asDiagonal() * X;
}

}  // namespace detail

inline GlmFit fit_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Link link,
                      const GlmOptions& opt = {}) {
  const Eigen::Index n = X.rows(), k = X.cols();
  require(n == y.size() && n > k && k > 0, errc::invalid_argument, "fit_glm: bad design dimensions");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  require(qr.rank() == k, errc::rank_deficient, "fit_glm: design matrix is rank deficient");

  GlmFit fit;
  if (link == Link::identity) {
    fit.coef = qr.solve(y);
    const Eigen::VectorXd r = y - X * fit.coef;
    fit.dispersion = r.squaredNorm() / static_cast<double>(n);
    const Eigen::MatrixXd xtx_inv =
        (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
    fit.cov_model = fit.dispersion * xtx_inv;
    fit.cov_sandwich = xtx_inv * detail::cross_meat(X, r) * xtx_inv;
    fit.converged = true;
    fit.iterations = 1;
    return fit;
  }

  // logit IRLS: beta <- beta + (X'WX)^-1 X'(y - mu), W = mu(1-mu)
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double last_step = kInf;
  const double score_tol = opt.score_tol_per_n * static_cast<double>(n);
  Eigen::VectorXd lp(n), mu(n), wdiag(n);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    lp = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = expit(lp[i]);
    const Eigen::VectorXd score = X.transpose() * (y - mu);
    const bool score_ok = score.lpNorm<Eigen::Infinity>() < score_tol;
    if (score_ok && last_step < opt.coef_tol) {
      fit.converged = true;
      fit.iterations = iter;
      break;
    }
    // Separated data keeps stepping at near-constant size while the score
    // vanishes, so test the predictor magnitude whenever we have not converged.
    if (lp.lpNorm<Eigen::Infinity>() > opt.lp_guard)
      fail(errc::separation, "fit_glm: separation suspected (diverging linear predictor)");
    for (Eigen::Index i = 0; i < n; ++i) wdiag[i] = mu[i] * (1.0 - mu[i]);
    const Eigen::MatrixXd info = X.transpose() * wdiag.asDiagonal() * X;
    const Eigen::VectorXd step = info.ldlt().solve(score);
    require(step.allFinite(), errc::separation, "fit_glm: singular weighted information");
    beta += step;
    last_step = step.lpNorm<Eigen::Infinity>();
    fit.iterations = iter + 1;
  }
  if (!fit.converged) fail(errc::non_convergence, "fit_glm: IRLS did not converge");

  fit.coef = beta;
  lp = X * beta;
  for (Eigen::Index i = 0; i < n; ++i) mu[i] = expit(lp[i]);
  for (Eigen::Index i = 0; i < n; ++i) wdiag[i] = mu[i] * (1.0 - mu[i]);
  const Eigen::MatrixXd info = X.transpose() * wdiag.asDiagonal() * X;
  const Eigen::MatrixXd info_inv = info.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  fit.cov_model = info_inv;
  fit.cov_sandwich = info_inv * detail::cross_meat(X, y - mu) * info_inv;
  return fit;
}

struct FittedOutcome {
  Eigen::VectorXd beta;       // (beta0, beta1, beta2, beta3...)
  Eigen::MatrixXd cov_beta;   // covariance of the chosen kind
  Link link = Link::identity;
  bool converged = false;
  int iterations = 0;
};

struct FittedMediator {
  Eigen::VectorXd gamma;      // (gamma0, gamma1, gamma2...)
  Eigen::MatrixXd cov_gamma;
  Link link = Link::identity;
  bool converged = false;
  int iterations = 0;
  bool has_sigma2 = false;    // identity link only
  double sigma2 = kNaN;       // (1/n) sum r^2
  double var_sigma2 = kNaN;   // (1/n^2) sum (r^2 - sigma2)^2
};

namespace detail {

inline Eigen::MatrixXd outcome_design(const Dataset& d) {
  Eigen::MatrixXd X(d.n(), 3 + d.p());
  X.col(0).setOnes();
  X.col(1) = d.x;
  X.col(2) = d.m;
  if (d.p() > 0) X.rightCols(d.p()) = d.w;
  return X;
}

inline Eigen::MatrixXd mediator_design(const Dataset& d) {
  Eigen::MatrixXd X(d.n(), 2 + d.p());
  X.col(0).setOnes();
  X.col(1) = d.x;
  if (d.p() > 0) X.rightCols(d.p()) = d.w;
  return X;
}

}  // namespace detail

inline FittedOutcome fit_outcome_model(const Dataset& d, CovarianceKind kind = CovarianceKind::sandwich,
                                       const GlmOptions& opt = {}) {
  d.validate();
  const Link link = d.y_binary ? Link::logit : Link::identity;
  const GlmFit fit = fit_glm(detail::outcome_design(d), d.y, link, opt);
  FittedOutcome out;
  out.beta = fit.coef;
  out.cov_beta = (kind == CovarianceKind::sandwich) ? fit.cov_sandwich : fit.cov_model;
  out.link = link;
  out.converged = fit.converged;
  out.iterations = fit.iterations;
  return out;
}

inline FittedMediator fit_mediator_model(const Dataset& d, CovarianceKind kind = CovarianceKind::sandwich,
                                         const GlmOptions& opt = {}) {
  d.validate();
  const Link link = d.m_binary ? Link::logit : Link::identity;
  const Eigen::MatrixXd X = detail::mediator_design(d);
  const GlmFit fit = fit_glm(X, d.m, link, opt);
  FittedMediator med;
  med.gamma = fit.coef;
  med.cov_gamma = (kind == CovarianceKind::sandwich) ? fit.cov_sandwich : fit.cov_model;
  med.link = link;
  med.converged = fit.converged;
  med.iterations = fit.iterations;
  if (link == Link::identity) {
    med.has_sigma2 = true;
    med.sigma2 = fit.dispersion;
    const Eigen::VectorXd r = d.m - X * fit.coef;
    const double n = static_cast<double>(d.n());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double dev = r[i] * r[i] - med.sigma2;
      acc += dev * dev;
    }
    med.var_sigma2 = acc / (n * n);
  }
  return med;
}

// Stacked parameter vector (beta; gamma; [sigma2]) with exactly block-diagonal
// covariance: the cross blocks are zero, not merely small.
struct ThetaLayout {
  Eigen::Index n_beta = 0;   // 3 + p_outcome
  Eigen::Index n_gamma = 0;  // 2 + p_mediator
  bool has_sigma2 = false;

  Eigen::Index dim() const { return n_beta + n_gamma + (has_sigma2 ? 1 : 0); }
};

struct ThetaEstimate {
  Eigen::VectorXd theta;
  Eigen::MatrixXd cov;
  ThetaLayout layout;
};

inline ThetaEstimate assemble_theta(const FittedOutcome& out, const FittedMediator& med,
                                    bool include_sigma2) {
  if (include_sigma2)
    require(med.has_sigma2, errc::missing_sigma2,
            "assemble_theta: sigma2 requested but the mediator fit has none (logit link)");
  ThetaEstimate est;
  est.layout.n_beta = out.beta.size();
  est.layout.n_gamma = med.gamma.size();
  est.layout.has_sigma2 = include_sigma2;
  const Eigen::Index dim = est.layout.dim();
  est.theta.resize(dim);
  est.theta.head(est.layout.n_beta) = out.beta;
  est.theta.segment(est.layout.n_beta, est.layout.n_gamma) = med.gamma;
  est.cov = Eigen::MatrixXd::Zero(dim, dim);
  est.cov.topLeftCorner(est.layout.n_beta, est.layout.n_beta) = out.cov_beta;
  est.cov.block(est.layout.n_beta, est.layout.n_beta, est.layout.n_gamma, est.layout.n_gamma) =
      med.cov_gamma;
  if (include_sigma2) {
    est.theta[dim - 1] = med.sigma2;
    est.cov(dim - 1, dim - 1) = med.var_sigma2;
  }
  return est;
}

}  // namespace medprod
