// Mediation measures on the scale native to each outcome/mediator case:
// mean differences when the outcome is continuous, log odds-ratios when it is
// binary. The total effect is always assembled as NIE + NDE, and the mediation
// proportion as NIE / TE with an explicit undefined flag near TE = 0.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "medprod/dataset.hpp"
#include "medprod/glm.hpp"
#include "medprod/quadrature.hpp"

namespace medprod {

enum class Flavor { exact, approximate, probit };

inline const char* flavor_name(Flavor f) {
  switch (f) {
    case Flavor::exact: return "exact";
    case Flavor::approximate: return "approximate";
    case Flavor::probit: return "probit";
  }
  return "?";
}

inline Flavor flavor_from_name(const std::string& name) {
  if (name == "exact") return Flavor::exact;
  if (name == "approximate") return Flavor::approximate;
  if (name == "probit") return Flavor::probit;
  fail(errc::invalid_flavor,
       "unknown flavor '" + name + "' (expected exact, approximate, or probit)");
}

// Which combinations are meaningful: the closed forms for continuous outcomes
// are already exact, so only binary outcomes get the rare-outcome approximation,
// and only the continuous-mediator binary-outcome case has a probit shortcut.
inline bool flavor_admissible(CaseType c, Flavor f) {
  switch (f) {
    case Flavor::exact: return true;
    case Flavor::approximate: return c == CaseType::c3 || c == CaseType::c4;
    case Flavor::probit: return c == CaseType::c3;
  }
  return false;
}

// sigma2 must ride along in theta whenever the marginalization over a
// continuous mediator uses it.
inline bool needs_sigma2(CaseType c, Flavor f) {
  return c == CaseType::c3 &&
         (f == Flavor::exact || f == Flavor::probit);
}

struct MediationRequest {
  double x_star = 0.0;         // reference exposure level
  double x_new = 1.0;          // comparison exposure level
  Eigen::VectorXd w_outcome;   // covariate values entering the outcome model (may be empty)
  Eigen::VectorXd w_mediator;  // covariate values entering the mediator model
  Flavor flavor = Flavor::exact;
  int ghq_nodes = 40;
};

struct MeasureSet {
  double nie = 0.0;
  double nde = 0.0;
  double te = 0.0;         // always nie + nde
  double mp = kNaN;        // nie / te when defined
  bool mp_defined = false;
};

inline constexpr double mp_guard = 1e-12;

inline MeasureSet make_measures(double nie, double nde) {
  MeasureSet m;
  m.nie = nie;
  m.nde = nde;
  m.te = nie + nde;
  if (std::isfinite(m.te) && std::fabs(m.te) > mp_guard) {
    m.mp = nie / m.te;
    m.mp_defined = true;
  }
  return m;
}

namespace detail {

// Coefficients split out of the stacked vector, with the two linear predictors
// evaluated at both exposure levels (m term excluded for the outcome model).
struct UnpackedTheta {
  double beta1, beta2, gamma1;
  double b_new, b_star;  // outcome intercept-plus-covariates at x_new / x_star
  double a_new, a_star;  // mediator linear predictor at x_new / x_star
  double sigma2;         // NaN when the layout carries none
};

inline UnpackedTheta unpack_theta(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                  const MediationRequest& req) {
  require(theta.size() == layout.dim(), errc::invalid_argument,
          "measures: theta length does not match layout");
  require(layout.n_beta >= 3 && layout.n_gamma >= 2, errc::invalid_argument,
          "measures: layout too small for (intercept, exposure, mediator) models");
  require(req.w_outcome.size() == layout.n_beta - 3, errc::invalid_argument,
          "measures: outcome covariate values do not match layout");
  require(req.w_mediator.size() == layout.n_gamma - 2, errc::invalid_argument,
          "measures: mediator covariate values do not match layout");

  UnpackedTheta u;
  const double beta0 = theta[0];
  u.beta1 = theta[1];
  u.beta2 = theta[2];
  double bw = 0.0;
  for (Eigen::Index j = 0; j < req.w_outcome.size(); ++j) bw += theta[3 + j] * req.w_outcome[j];
  const double gamma0 = theta[layout.n_beta];
  u.gamma1 = theta[layout.n_beta + 1];
  double gw = 0.0;
  for (Eigen::Index j = 0; j < req.w_mediator.size(); ++j)
    gw += theta[layout.n_beta + 2 + j] * req.w_mediator[j];

  u.b_new = beta0 + u.beta1 * req.x_new + bw;
  u.b_star = beta0 + u.beta1 * req.x_star + bw;
  u.a_new = gamma0 + u.gamma1 * req.x_new + gw;
  u.a_star = gamma0 + u.gamma1 * req.x_star + gw;
  u.sigma2 = layout.has_sigma2 ? theta[layout.dim() - 1] : kNaN;
  return u;
}

// Log-domain pieces of the binary/binary marginal success odds. With
// p = expit(g) the mediator probability and expit(b + beta2 m) the outcome
// probability, logit E[Y] = b + A(b, g) - K(b, g). Written so that identical
// argument pairs cancel bitwise (null contrasts come out exactly zero).
inline double lbb_A(double beta2, double b, double g) {
  return lse4(0.0, beta2 + b, beta2 + g, beta2 + g + b);
}
inline double lbb_K(double beta2, double b, double g) {
  return lse4(0.0, beta2 + b, g, g + b);
}

}  // namespace detail

// Continuous outcome, continuous mediator: plain product of coefficients.
inline MeasureSet case1_measures(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                 const MediationRequest& req) {
  require(flavor_admissible(CaseType::c1, req.flavor),
          errc::invalid_flavor, "continuous/continuous supports only the exact flavor");
  const detail::UnpackedTheta u = detail::unpack_theta(theta, layout, req);
  const double dx = req.x_new - req.x_star;
  return make_measures(u.beta2 * u.gamma1 * dx, u.beta1 * dx);
}

// Continuous outcome, binary mediator: the mediator mean shift is a difference
// of expits rather than gamma1 * dx.
inline MeasureSet case2_measures(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                 const MediationRequest& req) {
  require(flavor_admissible(CaseType::c2, req.flavor),
          errc::invalid_flavor, "continuous/binary supports only the exact flavor");
  const detail::UnpackedTheta u = detail::unpack_theta(theta, layout, req);
  const double nie = u.beta2 * (expit(u.a_new) - expit(u.a_star));
  return make_measures(nie, u.beta1 * (req.x_new - req.x_star));
}

// Binary outcome, continuous mediator. Exact: marginalize the logistic outcome
// over the normal mediator by quadrature; approximate: the continuous-case
// product formula (valid when the outcome is rare); probit: replace the
// logistic response with a rescaled probit, which integrates in closed form.
inline MeasureSet case3_measures(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                 const MediationRequest& req) {
  require(flavor_admissible(CaseType::c3, req.flavor),
          errc::invalid_flavor, "binary/continuous: unsupported flavor");
  const detail::UnpackedTheta u = detail::unpack_theta(theta, layout, req);
  const double dx = req.x_new - req.x_star;

  if (req.flavor == Flavor::approximate)
    return make_measures(u.beta2 * u.gamma1 * dx, u.beta1 * dx);

  require(layout.has_sigma2, errc::missing_sigma2,
          "binary/continuous exact and probit flavors need the mediator variance in theta");
  require(std::isfinite(u.sigma2) && u.sigma2 > 0.0, errc::invalid_argument,
          "binary/continuous: mediator variance must be positive");

  if (req.flavor == Flavor::probit) {
    // expit(z) ~= Phi(s z) with s = 1/1.6; the normal mediator then folds into
    // the denominator sqrt(1 + s^2 beta2^2 sigma2).
    const double s = 1.0 / 1.6;
    const double denom = std::sqrt(1.0 + s * s * u.beta2 * u.beta2 * u.sigma2);
    const auto lp = [&](double b, double a) {
      return logit(norm_cdf(s * (b + u.beta2 * a) / denom));
    };
    const double l_xx = lp(u.b_new, u.a_new);
    const double l_sx = lp(u.b_new, u.a_star);
    const double l_ss = lp(u.b_star, u.a_star);
    return make_measures(l_xx - l_sx, u.beta1 * dx + l_sx - l_ss);
  }

  // exact: logit E[Y | x_o, M(x_m)] = b(x_o) + lnr(a(x_m), sigma2, b(x_o), beta2),
  // so the b terms cancel inside each contrast.
  const double l_xx = logistic_normal_ratio(u.a_new, u.sigma2, u.b_new, u.beta2, req.ghq_nodes);
  const double l_sx = logistic_normal_ratio(u.a_star, u.sigma2, u.b_new, u.beta2, req.ghq_nodes);
  const double l_ss = logistic_normal_ratio(u.a_star, u.sigma2, u.b_star, u.beta2, req.ghq_nodes);
  return make_measures(l_xx - l_sx, u.beta1 * dx + l_sx - l_ss);
}

// Binary outcome, binary mediator. Exact: two-point marginalization in the log
// domain; approximate: the rare-outcome composition of softplus terms.
inline MeasureSet case4_measures(const Eigen::VectorXd& theta, const ThetaLayout& layout,
                                 const MediationRequest& req) {
  require(flavor_admissible(CaseType::c4, req.flavor),
          errc::invalid_flavor, "binary/binary: unsupported flavor");
  const detail::UnpackedTheta u = detail::unpack_theta(theta, layout, req);
  const double dx = req.x_new - req.x_star;

  if (req.flavor == Flavor::approximate) {
    // Grouped so equal summands cancel exactly when beta2 = 0 or a_new = a_star.
    const double nie = (softplus(u.a_star) + softplus(u.beta2 + u.a_new)) -
                       (softplus(u.a_new) + softplus(u.beta2 + u.a_star));
    return make_measures(nie, u.beta1 * dx);
  }

  const double axx = detail::lbb_A(u.beta2, u.b_new, u.a_new);
  const double kxx = detail::lbb_K(u.beta2, u.b_new, u.a_new);
  const double axs = detail::lbb_A(u.beta2, u.b_new, u.a_star);
  const double kxs = detail::lbb_K(u.beta2, u.b_new, u.a_star);
  const double ass = detail::lbb_A(u.beta2, u.b_star, u.a_star);
  const double kss = detail::lbb_K(u.beta2, u.b_star, u.a_star);
  const double nie = (axx - kxx) - (axs - kxs);
  const double nde = (u.b_new - u.b_star) + (axs - kxs) - (ass - kss);
  return make_measures(nie, nde);
}

inline MeasureSet evaluate_measures(CaseType c, const Eigen::VectorXd& theta,
                                    const ThetaLayout& layout, const MediationRequest& req) {
  switch (c) {
    case CaseType::c1: return case1_measures(theta, layout, req);
    case CaseType::c2: return case2_measures(theta, layout, req);
    case CaseType::c3: return case3_measures(theta, layout, req);
    case CaseType::c4: return case4_measures(theta, layout, req);
  }
  fail(errc::invalid_argument, "evaluate_measures: unknown case");
}

}  // namespace medprod
