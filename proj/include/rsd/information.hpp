#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/estimation.hpp"
#include "rsd/quadrature.hpp"

namespace rsd {

/// Observations sharing one support point. `precisions` accompanies the
/// precision-mixture model only, one entry per response. `eta_hat` must be the
/// stationary point of the group log-likelihood before the group is used for
/// information computations.
struct SupportGroup {
  int support_index = 0;
  std::vector<double> responses;
  std::vector<double> precisions;
  double eta_hat = 0.0;
};

/// Relevant-subset information about the group location: the conditional
/// expectation of the observed information given the within-group residual
/// configuration. For location families this is the ratio of two integrals of
/// the group likelihood kernel around the MLE, evaluated in log space with the
/// kernel anchored at its maximum; the precision-mixture model has the closed
/// form sum of precisions.
inline double relevant_info_eta(const ErrorModel& model, const SupportGroup& group) {
  if (model.family() == Family::HeteroNormalGamma) {
    if (group.precisions.empty())
      throw invalid_input("relevant_info_eta: precision-mixture group without precisions");
    double h = 0.0;
    for (double a : group.precisions) {
      if (!(a > 0.0)) throw invalid_input("relevant_info_eta: precisions must be > 0");
      h += a;
    }
    return h;
  }
  if (group.responses.empty()) throw invalid_input("relevant_info_eta: empty group");

  const std::size_t m = group.responses.size();
  const double tau = model.tau();
  const double score0 = detail::group_score(model, group.responses, group.eta_hat);
  if (!(std::abs(score0) <= 1e-8 * (1.0 + static_cast<double>(m)) / tau))
    throw invalid_input("relevant_info_eta: eta_hat is not a stationary point (|score|=" +
                        std::to_string(std::abs(score0)) + ")");

  const double ll_hat = detail::group_loglik(model, group.responses, group.eta_hat);
  auto integrand = [&](double eta) {
    double ll = 0.0;
    double info = 0.0;
    for (double y : group.responses) {
      const double e = y - eta;
      ll += model.log_density(e);
      info += model.observed_info(e);
    }
    const double kernel = std::exp(ll - ll_hat);
    return std::array<double, 2>{info * kernel, kernel};
  };
  const double half_width = 50.0 * tau;
  const auto res = integrate_adaptive_multi<2>(integrand, group.eta_hat - half_width,
                                               group.eta_hat + half_width, 1e-7, 0.0, 4000, 16);
  if (!res[0].converged || !res[1].converged || !(res[1].value > 0.0))
    throw numeric_error("relevant_info_eta: kernel quadrature failed (m=" + std::to_string(m) +
                        ", eta_hat=" + std::to_string(group.eta_hat) + ")");
  return res[0].value / res[1].value;
}

/// Invariant (parameterization-free) information g = h / mu; E[g] equals the
/// group size.
inline double invariant_info(double h, double mu) {
  if (!(mu > 0.0)) throw invalid_input("invariant_info: mu must be > 0");
  return h / mu;
}

/// Centered decomposition of the invariant information: u measures the
/// within-experiment imbalance against the target weights, v the total
/// information excess over the observation count. sum(u) = 0 identically.
inline void uv_statistics(const Eigen::VectorXd& g, const Eigen::VectorXd& w, double n_obs,
                          Eigen::VectorXd& u, Eigen::VectorXd& v) {
  if (g.size() != w.size()) throw invalid_input("uv_statistics: dimension mismatch");
  const double total = g.sum();
  u = g - w * total;
  v = w * (total - n_obs);
}

inline std::pair<Eigen::VectorXd, Eigen::VectorXd> uv_statistics(const Eigen::VectorXd& g,
                                                                 const Eigen::VectorXd& w,
                                                                 double n_obs) {
  Eigen::VectorXd u, v;
  uv_statistics(g, w, n_obs, u, v);
  return {u, v};
}

/// Relevant-subset information about theta: H = sum_i h_i f(x_i) f(x_i)^T.
inline Eigen::MatrixXd relevant_info_matrix(const Eigen::VectorXd& h, const Design& design,
                                            const Basis& basis) {
  if (h.size() != design.d()) throw invalid_input("relevant_info_matrix: dimension mismatch");
  const int p = basis.dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < design.d(); ++i) {
    if (h[i] < 0.0) throw invalid_input("relevant_info_matrix: negative group information");
    const Eigen::VectorXd f = basis.eval(design.support.row(i).transpose());
    m += h[i] * f * f.transpose();
  }
  return m;
}

/// Large-sample covariance of u under a deterministic design:
/// gamma^2 * n * (diag(w) - w w^T).
inline Eigen::MatrixXd limit_var_u(double gamma_sq, const Eigen::VectorXd& w, int n) {
  return gamma_sq * n *
         (Eigen::MatrixXd(w.asDiagonal()) - w * w.transpose());
}

/// Large-sample covariance of v: gamma^2 * n * w w^T.
inline Eigen::MatrixXd limit_var_v(double gamma_sq, const Eigen::VectorXd& w, int n) {
  return gamma_sq * n * w * w.transpose();
}

/// Second-order gap between the relevant-subset bound and the CRLB along
/// contrast c, evaluated from the u/v covariances:
/// mu * tr(D (varU + varV)) / n with D_ij = r_i r_j s_ij,
/// r_i = f_i^T M^{-1} c, s_ij = f_i^T M^{-1} f_j.
inline double asymptotic_gap(const Design& design, const Basis& basis, const ErrorModel& model,
                             const Eigen::VectorXd& c, const Eigen::MatrixXd& var_u,
                             const Eigen::MatrixXd& var_v) {
  const int d = design.d();
  const Eigen::MatrixXd m = moment_matrix(design, basis);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw numeric_error("asymptotic_gap: singular design moment matrix");
  Eigen::MatrixXd fx(d, basis.dim());
  for (int i = 0; i < d; ++i)
    fx.row(i) = basis.eval(design.support.row(i).transpose()).transpose();
  const Eigen::VectorXd r = fx * ldlt.solve(c);
  const Eigen::MatrixXd s = fx * ldlt.solve(fx.transpose());
  const Eigen::MatrixXd dm = r * r.transpose();
  const Eigen::MatrixXd D = dm.cwiseProduct(s);
  return model.elemental_info() * (D * (var_u + var_v)).trace() / design.n;
}

/// Standardized per-observation contribution of the approximate ancillary;
/// mean 0 by construction, used only in diagnostics and property checks.
inline double q_statistic(const ErrorModel& model, const MomentTable& table, double residual) {
  if (!(table.gamma_alt > 1e-9))
    throw invalid_input("q_statistic: not applicable, gamma = 0 (constant information)");
  const double mu = table.mu;
  const double i = model.observed_info(residual);
  const double s = model.score(residual);
  return (i / mu - 1.0 - table.nu11 * s / mu) / table.gamma_alt;
}

inline double q_statistic(const ErrorModel& model, double residual) {
  return q_statistic(model, model.moment_table(), residual);
}

/// Per-support information summary for one experiment's data.
struct InfoSummary {
  Eigen::VectorXd eta_hat;
  Eigen::VectorXd h;
  Eigen::VectorXd g;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  Eigen::MatrixXd H;
  Eigen::MatrixXd F;
};

/// Builds the full summary from per-support groups. Groups must be indexed
/// against the design's support rows; empty groups contribute zero
/// information. Group eta_hat values are (re)fit here.
inline InfoSummary summarize(const ErrorModel& model, const Design& design, const Basis& basis,
                             std::vector<SupportGroup>& groups) {
  const int d = design.d();
  if (static_cast<int>(groups.size()) != d)
    throw invalid_input("summarize: need one group per support point");
  InfoSummary s;
  s.eta_hat.resize(d);
  s.h.resize(d);
  int n_obs = 0;
  for (int i = 0; i < d; ++i) {
    SupportGroup& grp = groups[i];
    n_obs += static_cast<int>(grp.responses.empty() ? grp.precisions.size()
                                                    : grp.responses.size());
    const bool empty = model.family() == Family::HeteroNormalGamma ? grp.precisions.empty()
                                                                   : grp.responses.empty();
    if (empty) {
      s.eta_hat[i] = std::numeric_limits<double>::quiet_NaN();
      s.h[i] = 0.0;
      continue;
    }
    if (model.is_location_family()) {
      grp.eta_hat = mle_location(model, grp.responses);
    } else if (!grp.responses.empty()) {
      double num = 0.0, den = 0.0;
      for (std::size_t j = 0; j < grp.responses.size(); ++j) {
        num += grp.precisions[j] * grp.responses[j];
        den += grp.precisions[j];
      }
      grp.eta_hat = num / den;
    }
    s.eta_hat[i] = grp.eta_hat;
    s.h[i] = relevant_info_eta(model, grp);
  }
  s.g = s.h / model.elemental_info();
  uv_statistics(s.g, design.weights, static_cast<double>(n_obs), s.u, s.v);
  s.H = relevant_info_matrix(s.h, design, basis);
  s.F = fisher_matrix(design, basis, model);
  return s;
}

}  // namespace rsd
