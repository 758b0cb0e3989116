#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"

namespace rsd {

struct FitResult {
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd eta_hat;
  int iterations = 0;
  bool converged = false;
  double final_gradient_norm = 0.0;
};

namespace detail {

inline double group_loglik(const ErrorModel& model, std::span<const double> y, double eta) {
  double s = 0.0;
  for (double yi : y) s += model.log_density(yi - eta);
  return s;
}

inline double group_score(const ErrorModel& model, std::span<const double> y, double eta) {
  double s = 0.0;
  for (double yi : y) s += model.score(yi - eta);
  return s;
}

inline double group_curvature(const ErrorModel& model, std::span<const double> y, double eta) {
  double s = 0.0;
  for (double yi : y) s += model.observed_info(yi - eta);
  return s;  // -l''
}

}  // namespace detail

/// Location MLE for one support group by a deterministic global search:
/// the log-likelihood is scanned on a 512-point grid over
/// [min(y) - tau, max(y) + tau]; the best three grid points plus every data
/// point seed a safeguarded Newton polish and the stationary point with the
/// highest log-likelihood wins. The data-point seeds matter for heavy-tailed
/// groups, where one extreme observation can stretch the grid so far that no
/// uniform grid point lands near the dominant mode.
inline double mle_location(const ErrorModel& model, std::span<const double> responses) {
  if (responses.empty()) throw invalid_input("mle_location: no responses");
  if (!model.is_location_family())
    throw invalid_input("mle_location: model is not a location family");
  const double tau = model.tau();
  const std::size_t m = responses.size();
  if (m == 1) return responses[0];

  const auto [mn_it, mx_it] = std::minmax_element(responses.begin(), responses.end());
  const double lo = *mn_it - tau;
  const double hi = *mx_it + tau;

  constexpr int kGrid = 512;
  std::vector<double> seeds;
  seeds.reserve(kGrid);
  for (int k = 0; k < kGrid; ++k)
    seeds.push_back(lo + (hi - lo) * static_cast<double>(k) / (kGrid - 1));
  std::vector<std::size_t> order(seeds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> ll(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i)
    ll[i] = detail::group_loglik(model, responses, seeds[i]);
  std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                    [&ll](std::size_t a, std::size_t b) { return ll[a] > ll[b]; });
  std::vector<double> starts = {seeds[order[0]], seeds[order[1]], seeds[order[2]]};
  starts.insert(starts.end(), responses.begin(), responses.end());

  const double tol = 1e-9 * (1.0 + static_cast<double>(m)) / tau;
  const double max_step = 4.0 * tau;

  double best_eta = 0.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (double eta : starts) {
    double cur_ll = detail::group_loglik(model, responses, eta);
    double g = detail::group_score(model, responses, eta);
    bool ok = false;
    for (int it = 0; it < 200; ++it) {
      if (std::abs(g) <= tol) {
        ok = true;
        break;
      }
      const double curv = detail::group_curvature(model, responses, eta);
      double step = curv > 0.0 ? g / curv : (g > 0.0 ? 0.5 * tau : -0.5 * tau);
      step = std::clamp(step, -max_step, max_step);
      double next = eta + step;
      double next_ll = detail::group_loglik(model, responses, next);
      int halvings = 0;
      while (next_ll < cur_ll && halvings < 40) {
        step *= 0.5;
        next = eta + step;
        next_ll = detail::group_loglik(model, responses, next);
        ++halvings;
      }
      if (next == eta) {  // step underflowed; treat as stationary if score is tiny
        ok = std::abs(g) <= 1e-6 * (1.0 + static_cast<double>(m)) / tau;
        break;
      }
      eta = next;
      cur_ll = next_ll;
      g = detail::group_score(model, responses, eta);
    }
    if (ok && std::abs(g) <= tol) {
      // Near-equal likelihoods (exactly tied twin modes happen for two-point
      // heavy-tailed groups) break toward the smaller location so the chosen
      // maximizer is shift covariant.
      const bool tie = any && std::abs(cur_ll - best_ll) <= 1e-10 * (1.0 + std::abs(best_ll));
      if (!any || (tie && eta < best_eta) || (!tie && cur_ll > best_ll)) {
        best_ll = std::max(best_ll, cur_ll);
        best_eta = eta;
        any = true;
      }
    }
  }
  if (!any)
    throw numeric_error("mle_location: no seed converged to a stationary point (m=" +
                        std::to_string(m) + ")");
  return best_eta;
}

namespace detail {

// Groups per-observation rows by exact row equality, first appearance order.
inline std::vector<int> group_rows(const Eigen::MatrixXd& rows, Eigen::MatrixXd& unique_rows) {
  const int n = static_cast<int>(rows.rows());
  std::vector<int> id(n, -1);
  std::vector<int> firsts;
  for (int j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < firsts.size(); ++k) {
      if (rows.row(j) == rows.row(firsts[k])) {
        id[j] = static_cast<int>(k);
        break;
      }
    }
    if (id[j] < 0) {
      id[j] = static_cast<int>(firsts.size());
      firsts.push_back(j);
    }
  }
  unique_rows.resize(static_cast<int>(firsts.size()), rows.cols());
  for (std::size_t k = 0; k < firsts.size(); ++k) unique_rows.row(static_cast<int>(k)) = rows.row(firsts[k]);
  return id;
}

}  // namespace detail

/// MLE of theta for a linear predictor. Precision-mixture responses reduce to
/// weighted least squares; location families fit per-group location MLEs when
/// the design is saturated (as many distinct rows as parameters) and fall back
/// to Fisher-scoring on the full likelihood otherwise.
inline FitResult mle_theta(const ErrorModel& model, const Eigen::MatrixXd& basis_rows,
                           const Eigen::VectorXd& responses,
                           const Eigen::VectorXd* precisions = nullptr) {
  const int n = static_cast<int>(basis_rows.rows());
  const int p = static_cast<int>(basis_rows.cols());
  if (responses.size() != n) throw invalid_input("mle_theta: row/response length mismatch");
  if (Eigen::FullPivLU<Eigen::MatrixXd>(basis_rows).rank() < p)
    throw numeric_error("mle_theta: basis rows are rank deficient");

  Eigen::MatrixXd unique_rows;
  const std::vector<int> gid = detail::group_rows(basis_rows, unique_rows);
  const int d = static_cast<int>(unique_rows.rows());

  FitResult fit;
  if (model.family() == Family::HeteroNormalGamma) {
    if (precisions == nullptr || precisions->size() != n)
      throw invalid_input("mle_theta: precision-mixture model requires per-observation precisions");
    Eigen::VectorXd hsum = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd hy = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < n; ++j) {
      hsum[gid[j]] += (*precisions)[j];
      hy[gid[j]] += (*precisions)[j] * responses[j];
    }
    fit.eta_hat = hy.array() / hsum.array();
    Eigen::MatrixXd H = unique_rows.transpose() * hsum.asDiagonal() * unique_rows;
    Eigen::VectorXd rhs = unique_rows.transpose() * hsum.asDiagonal() * fit.eta_hat;
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success)
      throw numeric_error("mle_theta: weighted information matrix is not positive definite");
    fit.theta_hat = llt.solve(rhs);
    fit.converged = true;
    fit.final_gradient_norm = 0.0;
    return fit;
  }

  // Location family.
  std::vector<std::vector<double>> group_y(d);
  for (int j = 0; j < n; ++j) group_y[gid[j]].push_back(responses[j]);

  if (d == p) {  // saturated: invertible map between eta and theta
    fit.eta_hat.resize(d);
    for (int i = 0; i < d; ++i) fit.eta_hat[i] = mle_location(model, group_y[i]);
    fit.theta_hat = Eigen::PartialPivLU<Eigen::MatrixXd>(unique_rows).solve(fit.eta_hat);
    Eigen::VectorXd total_score = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < n; ++j)
      total_score += model.score(responses[j] - fit.eta_hat[gid[j]]) * basis_rows.row(j).transpose();
    fit.final_gradient_norm = total_score.norm();
    fit.converged = true;
    return fit;
  }

  // Fisher scoring on the full likelihood from the least-squares seed.
  Eigen::VectorXd theta =
      basis_rows.colPivHouseholderQr().solve(responses);
  const double mu = model.elemental_info();
  Eigen::LLT<Eigen::MatrixXd> expected_info((mu * basis_rows.transpose() * basis_rows).eval());
  const double tol = 1e-8 * (1.0 + n) / model.tau();
  auto loglik = [&](const Eigen::VectorXd& th) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += model.log_density(responses[j] - basis_rows.row(j).dot(th));
    return s;
  };
  double cur = loglik(theta);
  int it = 0;
  double gnorm = 0.0;
  for (; it < 200; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < n; ++j)
      grad += model.score(responses[j] - basis_rows.row(j).dot(theta)) * basis_rows.row(j).transpose();
    gnorm = grad.norm();
    if (gnorm <= tol) break;
    Eigen::VectorXd step = expected_info.solve(grad);
    Eigen::VectorXd next = theta + step;
    double next_ll = loglik(next);
    // Near the optimum the per-step gain drops below the resolution of the
    // summed log-likelihood; the slack keeps the scoring iteration moving
    // until the gradient criterion is met.
    const double slack = 1e-12 * (1.0 + std::abs(cur));
    int halvings = 0;
    while (next_ll < cur - slack && halvings < 40) {
      step *= 0.5;
      next = theta + step;
      next_ll = loglik(next);
      ++halvings;
    }
    if ((next - theta).norm() == 0.0) break;
    theta = next;
    cur = std::max(cur, next_ll);
  }
  fit.theta_hat = theta;
  fit.iterations = it;
  fit.final_gradient_norm = gnorm;
  fit.converged = gnorm <= tol;
  fit.eta_hat = unique_rows * theta;  // fitted group locations
  return fit;
}

}  // namespace rsd
