#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "rsd/adaptive.hpp"
#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/information.hpp"
#include "rsd/rng.hpp"

namespace rsd {

enum class Strategy { Fixed, RRSD, DRSD };

/// One simulation scenario. `design` is the a-priori design (budget n lives on
/// it); a random design, when present, is realized afresh each iteration
/// before the strategy runs (randomize, then adapt).
struct ScenarioConfig {
  ScenarioConfig(ErrorModel m, Basis b, Design d)
      : model(std::move(m)), basis(b), design(std::move(d)) {}

  ErrorModel model;
  Basis basis;
  Design design;
  std::optional<RandomDesign> random_design;
  Strategy strategy = Strategy::Fixed;
  Eigen::VectorXd theta_true;
  int n1 = 0;
  int iterations = 2000;
  std::uint64_t seed = 0;
  std::optional<Eigen::VectorXd> contrast;
  std::optional<Criterion> criterion;
  int threads = 1;

  int n() const noexcept { return design.n; }
};

struct SimulationReport {
  Eigen::MatrixXd crlb;
  Eigen::MatrixXd mean_hinv, se_mean_hinv;
  Eigen::MatrixXd var_mle, se_var_mle;
  Eigen::VectorXd mean_theta, se_mean_theta;
  // Per-iteration samples (kept in memory for paired comparisons and property
  // checks; not part of the serialized report).
  Eigen::MatrixXd theta_samples;  // R_eff x p
  Eigen::MatrixXd hinv_samples;   // R_eff x p*p, row-major entries
  Eigen::MatrixXd u_samples, v_samples;  // R_eff x d
  int r_requested = 0;
  int r_effective = 0;
  int failed_iterations = 0;
  std::uint64_t seed = 0;
  std::optional<double> lb_eff, lb_eff_se, lb_eff_paper_orientation;
  std::optional<Eigen::VectorXd> contrast;
};

namespace detail {

/// Integer allocation closest to the targets, summing exactly to n
/// (largest-remainder rounding; exact when the targets are integers).
inline Eigen::VectorXi apportion(const Eigen::VectorXd& targets, int n) {
  const int d = static_cast<int>(targets.size());
  Eigen::VectorXi counts(d);
  int total = 0;
  for (int i = 0; i < d; ++i) {
    counts[i] = static_cast<int>(std::floor(targets[i] + 1e-12));
    total += counts[i];
  }
  std::vector<int> order(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ra = targets[a] - std::floor(targets[a] + 1e-12);
    const double rb = targets[b] - std::floor(targets[b] + 1e-12);
    if (ra != rb) return ra > rb;
    return a < b;
  });
  for (int k = 0; total < n; ++k, ++total) counts[order[static_cast<std::size_t>(k % d)]] += 1;
  return counts;
}

struct IterationRecord {
  bool ok = false;
  Eigen::MatrixXd hinv;
  Eigen::VectorXd theta;
  Eigen::VectorXd u, v;
};

inline void draw_observation(const ErrorModel& model, double eta, Stream& stream, double& response,
                             double& precision, bool& has_precision) {
  if (model.family() == Family::HeteroNormalGamma) {
    const auto [a, eps] = model.sample_precision_residual(stream);
    response = eta + eps;
    precision = a;
    has_precision = true;
  } else {
    response = eta + model.sample_residual(stream);
    has_precision = false;
  }
}

inline IterationRecord run_once(const ScenarioConfig& config, Stream& stream) {
  const Design& realized = config.random_design
                               ? sample_design(*config.random_design, stream)
                               : config.design;
  const Basis& basis = config.basis;
  const ErrorModel& model = config.model;
  const int d = realized.d();
  const int p = basis.dim();

  Eigen::VectorXd eta_true(d);
  for (int i = 0; i < d; ++i)
    eta_true[i] = basis.eval(realized.support.row(i).transpose()).dot(config.theta_true);

  std::vector<SupportGroup> groups(static_cast<std::size_t>(d));
  Eigen::VectorXd h(d);
  Eigen::VectorXd u, v;

  if (config.strategy == Strategy::Fixed) {
    const Eigen::VectorXi counts =
        apportion(realized.n * realized.weights, realized.n);
    for (int i = 0; i < d; ++i) {
      SupportGroup& grp = groups[static_cast<std::size_t>(i)];
      grp.support_index = i;
      for (int k = 0; k < counts[i]; ++k) {
        double y, a;
        bool has_a;
        draw_observation(model, eta_true[i], stream, y, a, has_a);
        grp.responses.push_back(y);
        if (has_a) grp.precisions.push_back(a);
      }
    }
    const InfoSummary summary = summarize(model, realized, basis, groups);
    h = summary.h;
    u = summary.u;
    v = summary.v;
  } else {
    const Mode mode = config.strategy == Strategy::RRSD ? Mode::RRSD : Mode::DRSD;
    ExperimentState state = initialize(realized, basis, model, config.n1, mode, stream);
    while (!state.complete()) {
      RunPlan plan = state.pending ? *state.pending : next_plan(state, stream);
      std::vector<double> responses(static_cast<std::size_t>(plan.size));
      std::vector<double> precisions;
      for (int k = 0; k < plan.size; ++k) {
        double y, a;
        bool has_a;
        draw_observation(model, eta_true[plan.allocations[static_cast<std::size_t>(k)]], stream, y,
                         a, has_a);
        responses[static_cast<std::size_t>(k)] = y;
        if (has_a) precisions.push_back(a);
      }
      record_run(state, plan, responses, stream, precisions);
    }
    groups = state.groups;
    h = state.h_current;
    u = state.u_current;
    v = state.v_current;
  }

  IterationRecord rec;
  const Eigen::MatrixXd H = relevant_info_matrix(h, realized, basis);
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success)
    throw numeric_error("run_once: relevant-subset information is not positive definite");
  rec.hinv = llt.solve(Eigen::MatrixXd::Identity(p, p));

  if (d == p) {
    Eigen::MatrixXd rows(d, p);
    Eigen::VectorXd eta_hat(d);
    for (int i = 0; i < d; ++i) {
      const SupportGroup& grp = groups[static_cast<std::size_t>(i)];
      if (grp.responses.empty()) throw numeric_error("run_once: a support point received no data");
      rows.row(i) = basis.eval(realized.support.row(i).transpose()).transpose();
      eta_hat[i] = grp.eta_hat;
    }
    rec.theta = Eigen::PartialPivLU<Eigen::MatrixXd>(rows).solve(eta_hat);
  } else {
    int n_obs = 0;
    for (const auto& grp : groups) n_obs += static_cast<int>(grp.responses.size());
    Eigen::MatrixXd rows(n_obs, p);
    Eigen::VectorXd ys(n_obs);
    Eigen::VectorXd as(n_obs);
    int j = 0;
    for (int i = 0; i < d; ++i) {
      const SupportGroup& grp = groups[static_cast<std::size_t>(i)];
      const Eigen::VectorXd f = basis.eval(realized.support.row(i).transpose());
      for (std::size_t k = 0; k < grp.responses.size(); ++k, ++j) {
        rows.row(j) = f.transpose();
        ys[j] = grp.responses[k];
        if (!grp.precisions.empty()) as[j] = grp.precisions[k];
      }
    }
    const bool weighted = model.family() == Family::HeteroNormalGamma;
    const FitResult fit = mle_theta(model, rows, ys, weighted ? &as : nullptr);
    if (!fit.converged) throw numeric_error("run_once: theta fit did not converge");
    rec.theta = fit.theta_hat;
  }
  rec.u = u;
  rec.v = v;
  rec.ok = true;
  return rec;
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
  const int r = static_cast<int>(samples.rows());
  if (r < 2) throw numeric_error("sample_covariance: needs at least two samples");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  return centered.transpose() * centered / (r - 1.0);
}

}  // namespace detail

/// Runs one scenario: every iteration realizes the design (when random), runs
/// the strategy to the full budget with simulated responses at theta_true,
/// then records the inverse relevant-subset information and the MLE.
/// Iteration k draws from substream 4k (+attempt on retry), so results are
/// bit-identical at any thread count; failed iterations are retried on fresh
/// substreams up to 3 times, then excluded.
inline SimulationReport run_scenario(const ScenarioConfig& config) {
  config.design.validate();
  if (config.random_design) config.random_design->validate();
  if (config.iterations < 1) throw invalid_input("run_scenario: iterations must be >= 1");
  if (config.theta_true.size() != config.basis.dim())
    throw invalid_input("run_scenario: theta_true dimension does not match the basis");
  if (config.contrast && config.contrast->size() != config.basis.dim())
    throw invalid_input("run_scenario: contrast dimension does not match the basis");
  if (config.strategy != Strategy::Fixed) {
    if (config.n1 < config.design.d() || config.n1 > config.n())
      throw invalid_input("run_scenario: adaptive strategies need d <= n1 <= n");
  }

  const int R = config.iterations;
  std::vector<detail::IterationRecord> records(static_cast<std::size_t>(R));
  std::atomic<int> next{0};
  std::atomic<int> failures{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= R) return;
      try {
        for (int attempt = 0; attempt < 4; ++attempt) {
          Stream stream(config.seed, static_cast<std::uint64_t>(k) * 4 + attempt);
          try {
            records[static_cast<std::size_t>(k)] = detail::run_once(config, stream);
            break;
          } catch (const numeric_error&) {
            failures.fetch_add(1);
          }
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int threads = std::max(1, config.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  const int p = config.basis.dim();
  const int d = config.design.d();
  int r_eff = 0;
  for (const auto& rec : records) r_eff += rec.ok ? 1 : 0;
  if (r_eff < 2) throw numeric_error("run_scenario: fewer than two iterations succeeded");

  SimulationReport report;
  report.r_requested = R;
  report.r_effective = r_eff;
  report.failed_iterations = failures.load();
  report.seed = config.seed;
  report.theta_samples.resize(r_eff, p);
  report.hinv_samples.resize(r_eff, p * p);
  report.u_samples.resize(r_eff, d);
  report.v_samples.resize(r_eff, d);
  int row = 0;
  for (const auto& rec : records) {
    if (!rec.ok) continue;
    report.theta_samples.row(row) = rec.theta.transpose();
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) report.hinv_samples(row, a * p + b) = rec.hinv(a, b);
    report.u_samples.row(row) = rec.u.transpose();
    report.v_samples.row(row) = rec.v.transpose();
    ++row;
  }

  // CRLB of the initializing (possibly random) design: inverse of the
  // pi-expected information.
  if (config.random_design) {
    Eigen::MatrixXd f_mix = Eigen::MatrixXd::Zero(p, p);
    for (const auto& atom : config.random_design->atoms)
      f_mix += atom.probability * fisher_matrix(atom.design, config.basis, config.model);
    Eigen::LLT<Eigen::MatrixXd> llt(f_mix);
    if (llt.info() != Eigen::Success) throw numeric_error("run_scenario: singular mixture information");
    report.crlb = llt.solve(Eigen::MatrixXd::Identity(p, p));
  } else {
    report.crlb = crlb(config.design, config.basis, config.model);
  }

  report.mean_hinv.resize(p, p);
  report.se_mean_hinv.resize(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b) {
      const Eigen::VectorXd col = report.hinv_samples.col(a * p + b);
      const double mean = col.mean();
      report.mean_hinv(a, b) = mean;
      report.se_mean_hinv(a, b) =
          std::sqrt((col.array() - mean).square().sum() / (r_eff - 1.0) / r_eff);
    }
  report.var_mle = detail::sample_covariance(report.theta_samples);
  report.se_var_mle.resize(p, p);
  {
    const Eigen::RowVectorXd mean = report.theta_samples.colwise().mean();
    const Eigen::MatrixXd centered = report.theta_samples.rowwise() - mean;
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < p; ++b) {
        const Eigen::ArrayXd prods = centered.col(a).array() * centered.col(b).array();
        const double pm = prods.mean();
        report.se_var_mle(a, b) = std::sqrt((prods - pm).square().sum() / (r_eff - 1.0) / r_eff);
      }
  }
  report.mean_theta = report.theta_samples.colwise().mean().transpose();
  report.se_mean_theta.resize(p);
  for (int a = 0; a < p; ++a) {
    const Eigen::ArrayXd col = report.theta_samples.col(a).array();
    report.se_mean_theta[a] =
        std::sqrt((col - col.mean()).square().sum() / (r_eff - 1.0) / r_eff);
  }

  if (config.contrast) {
    const Eigen::VectorXd& c = *config.contrast;
    report.contrast = c;
    const double q_ref = c.dot(report.crlb * c);
    Eigen::ArrayXd series(r_eff);
    for (int r = 0; r < r_eff; ++r) {
      double q = 0.0;
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) q += c[a] * report.hinv_samples(r, a * p + b) * c[b];
      series[r] = q;
    }
    const double mean = series.mean();
    const double se = std::sqrt((series - mean).square().sum() / (r_eff - 1.0) / r_eff);
    report.lb_eff = q_ref / mean;
    report.lb_eff_se = q_ref * se / (mean * mean);
    report.lb_eff_paper_orientation = mean / q_ref;
  }
  return report;
}

/// Contrast efficiency against the design's own CRLB, oriented to lie in
/// (0, 1] up to Monte Carlo noise.
inline double lb_efficiency(const SimulationReport& report, const Eigen::VectorXd& c) {
  const double q_ref = c.dot(report.crlb * c);
  const double q_lb = c.dot(report.mean_hinv * c);
  return q_ref / q_lb;
}

/// Criterion efficiency of the relevant-subset bound against a reference CRLB.
inline double lb_efficiency_psi(const SimulationReport& report, const Criterion& criterion,
                                const Eigen::MatrixXd& reference_crlb, const Basis& basis) {
  return criterion_value_inverse_scale(reference_crlb, criterion, basis) /
         criterion_value_inverse_scale(report.mean_hinv, criterion, basis);
}

/// Criterion efficiency of the empirical MLE covariance against a reference
/// CRLB, oriented to lie in (0, 1] up to Monte Carlo noise.
inline double var_efficiency(const SimulationReport& report, const Criterion& criterion,
                             const Eigen::MatrixXd& reference_crlb, const Basis& basis) {
  return criterion_value_inverse_scale(reference_crlb, criterion, basis) /
         criterion_value_inverse_scale(report.var_mle, criterion, basis);
}

/// Empirical covariance matrices of the u and v statistics across iterations.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> uv_variance_study(const ScenarioConfig& config) {
  const SimulationReport report = run_scenario(config);
  return {detail::sample_covariance(report.u_samples),
          detail::sample_covariance(report.v_samples)};
}

}  // namespace rsd
