#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/estimation.hpp"
#include "rsd/information.hpp"
#include "rsd/rng.hpp"

namespace rsd {

enum class Mode { RRSD, DRSD };

struct Observation {
  int support_index = 0;
  double response = 0.0;
  double precision = 0.0;
  bool has_precision = false;
};

/// One run's allocation decision. For randomized runs `probs` are the
/// per-support allocation probabilities; for deterministic one-step runs
/// `chosen_index` is the winning support point. `allocations` holds the
/// realized support index of each observation once sampled.
struct RunPlan {
  int size = 0;
  Eigen::VectorXd probs;
  int chosen_index = -1;
  bool capped = false;
  std::vector<int> allocations;
};

/// Running state of one sequential experiment. Information summaries are
/// recomputed from all data after every recorded run; `remaining` plus the
/// recorded observation count always equals the budget n.
struct ExperimentState {
  ExperimentState(Design d, Basis b, ErrorModel m, Mode md)
      : design(std::move(d)), basis(b), model(m), mode(md) {}

  Design design;
  Basis basis;
  ErrorModel model;
  Mode mode;
  int n1 = 0;
  int run_index = 0;
  int remaining = 0;
  bool capped = false;
  std::vector<Observation> observations;
  std::vector<SupportGroup> groups;
  Eigen::VectorXd h_current, g_current, u_current, v_current;
  std::optional<RunPlan> pending;
  std::vector<std::string> warnings;

  int observed() const noexcept { return static_cast<int>(observations.size()); }
  bool complete() const noexcept { return remaining == 0; }
};

namespace detail {

inline void refit_group(ExperimentState& state, int i) {
  SupportGroup& grp = state.groups[static_cast<std::size_t>(i)];
  if (state.model.family() == Family::HeteroNormalGamma) {
    if (grp.precisions.empty()) {
      state.h_current[i] = 0.0;
      return;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < grp.responses.size(); ++j) {
      num += grp.precisions[j] * grp.responses[j];
      den += grp.precisions[j];
    }
    grp.eta_hat = den > 0.0 ? num / den : 0.0;
  } else {
    if (grp.responses.empty()) {
      state.h_current[i] = 0.0;
      return;
    }
    grp.eta_hat = mle_location(state.model, grp.responses);
  }
  state.h_current[i] = relevant_info_eta(state.model, grp);
}

inline void recompute_uv(ExperimentState& state) {
  state.g_current = state.h_current / state.model.elemental_info();
  uv_statistics(state.g_current, state.design.weights, static_cast<double>(state.observed()),
                state.u_current, state.v_current);
}

}  // namespace detail

/// Sets up the first run. The initial allocation follows the design weights:
/// exactly when n1*w_i are integers, by nearest-integer counts when those
/// round consistently to n1, and otherwise each observation independently
/// with probability w_i.
inline ExperimentState initialize(const Design& design, const Basis& basis,
                                  const ErrorModel& model, int n1, Mode mode, Stream& stream) {
  design.validate();
  const int d = design.d();
  if (n1 > design.n) throw invalid_input("initialize: n1 exceeds the budget n");
  if (n1 < d) throw invalid_input("initialize: first run must be able to cover every support point");

  ExperimentState state(design, basis, model, mode);
  state.n1 = n1;
  state.remaining = design.n;
  state.groups.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) state.groups[static_cast<std::size_t>(i)].support_index = i;
  state.h_current = Eigen::VectorXd::Zero(d);
  state.g_current = Eigen::VectorXd::Zero(d);
  state.u_current = Eigen::VectorXd::Zero(d);
  state.v_current = Eigen::VectorXd::Zero(d);

  for (int i = 0; i < d; ++i)
    if (n1 * design.weights[i] < 2.0 - 1e-12)
      state.warnings.push_back("first run places fewer than 2 expected observations on support point " +
                               std::to_string(i + 1));

  RunPlan first;
  first.size = n1;
  first.probs = design.weights;

  Eigen::VectorXd exact = (n1 * design.weights.array()).matrix();
  bool integers = true;
  Eigen::VectorXi counts(d);
  long total = 0;
  for (int i = 0; i < d; ++i) {
    counts[i] = static_cast<int>(std::lround(exact[i]));
    total += counts[i];
    if (std::abs(exact[i] - counts[i]) > 1e-9) integers = false;
  }
  const bool consistent_rounding = total == n1 && counts.minCoeff() >= 0;
  if (integers || consistent_rounding) {
    for (int i = 0; i < d; ++i)
      first.allocations.insert(first.allocations.end(), static_cast<std::size_t>(counts[i]), i);
  } else {
    std::vector<double> probs(design.weights.data(), design.weights.data() + d);
    for (int j = 0; j < n1; ++j) first.allocations.push_back(stream.categorical(probs));
  }
  state.pending = std::move(first);
  return state;
}

/// Next randomized run from the current imbalance statistics: the run size is
/// the smallest integer batch for which the corrected allocation probabilities
/// stay nonnegative, capped at the remaining budget (in which case the
/// probabilities revert to the design weights). Zero imbalance degenerates to
/// a single observation at the design weights.
inline RunPlan plan_next_run(const ExperimentState& state) {
  if (state.mode != Mode::RRSD) throw invalid_input("plan_next_run: state is not in randomized mode");
  if (state.pending) throw invalid_input("plan_next_run: pending run has unrecorded responses");
  if (state.run_index < 1) throw invalid_input("plan_next_run: first run not recorded yet");
  if (state.remaining <= 0) throw invalid_input("plan_next_run: budget exhausted");

  const Eigen::VectorXd& w = state.design.weights;
  const Eigen::VectorXd& u = state.u_current;
  const int d = state.design.d();

  double max_ratio = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i) max_ratio = std::max(max_ratio, u[i] / w[i]);

  RunPlan plan;
  if (!(max_ratio > 0.0)) {  // no correction needed; take the smallest step
    plan.size = 1;
    plan.probs = w;
    return plan;
  }
  const double temp = std::ceil(max_ratio);
  if (temp <= static_cast<double>(state.remaining)) {
    plan.size = static_cast<int>(temp);
    plan.probs = w - u / temp;
    for (int i = 0; i < d; ++i) plan.probs[i] = std::max(0.0, plan.probs[i]);
    plan.probs /= plan.probs.sum();
  } else {
    plan.size = state.remaining;
    plan.probs = w;
    plan.capped = true;
  }
  return plan;
}

/// Next deterministic one-step allocation: the support point maximizing the
/// corrected score w_i - u_i. Scores may leave [0, 1]; only the argmax is
/// used. Ties resolve to the lowest index.
inline RunPlan drsd_next_point(const ExperimentState& state) {
  if (state.mode != Mode::DRSD) throw invalid_input("drsd_next_point: state is not in one-step mode");
  if (state.pending) throw invalid_input("drsd_next_point: pending run has unrecorded responses");
  if (state.run_index < 1) throw invalid_input("drsd_next_point: first run not recorded yet");
  if (state.remaining <= 0) throw invalid_input("drsd_next_point: budget exhausted");

  const Eigen::VectorXd scores = state.design.weights - state.u_current;
  int best = 0;
  for (int i = 1; i < state.design.d(); ++i)
    if (scores[i] > scores[best]) best = i;
  RunPlan plan;
  plan.size = 1;
  plan.chosen_index = best;
  plan.allocations = {best};
  return plan;
}

/// Computes the next plan for the state's mode, samples its allocations, and
/// parks it on the state for response collection.
inline RunPlan& next_plan(ExperimentState& state, Stream& stream) {
  RunPlan plan = state.mode == Mode::RRSD ? plan_next_run(state) : drsd_next_point(state);
  if (plan.allocations.empty()) {
    std::vector<double> probs(plan.probs.data(), plan.probs.data() + plan.probs.size());
    plan.allocations.reserve(static_cast<std::size_t>(plan.size));
    for (int j = 0; j < plan.size; ++j) plan.allocations.push_back(stream.categorical(probs));
  }
  state.pending = std::move(plan);
  return *state.pending;
}

/// Records one run of responses against a plan. Allocations are sampled here
/// when the plan does not carry them yet (simulation path); response k belongs
/// to allocations[k]. Every affected group is refit and the information
/// summaries are rebuilt from all data so far.
inline void record_run(ExperimentState& state, RunPlan plan, std::span<const double> responses,
                       Stream& stream, std::span<const double> precisions = {}) {
  if (plan.size <= 0) throw invalid_input("record_run: empty plan");
  if (plan.size > state.remaining) throw invalid_input("record_run: plan exceeds remaining budget");
  if (static_cast<int>(responses.size()) != plan.size)
    throw invalid_input("record_run: response count does not match the plan size");
  const bool needs_precisions = state.model.family() == Family::HeteroNormalGamma;
  if (needs_precisions && static_cast<int>(precisions.size()) != plan.size)
    throw invalid_input("record_run: precision-mixture model needs one precision per response");

  if (plan.allocations.empty()) {
    if (plan.chosen_index >= 0) {
      plan.allocations.assign(static_cast<std::size_t>(plan.size), plan.chosen_index);
    } else {
      std::vector<double> probs(plan.probs.data(), plan.probs.data() + plan.probs.size());
      for (int j = 0; j < plan.size; ++j) plan.allocations.push_back(stream.categorical(probs));
    }
  }
  if (static_cast<int>(plan.allocations.size()) != plan.size)
    throw invalid_input("record_run: allocation count does not match the plan size");

  std::vector<bool> touched(static_cast<std::size_t>(state.design.d()), false);
  for (int k = 0; k < plan.size; ++k) {
    const int i = plan.allocations[static_cast<std::size_t>(k)];
    if (i < 0 || i >= state.design.d())
      throw invalid_input("record_run: allocation index out of range");
    Observation obs;
    obs.support_index = i;
    obs.response = responses[static_cast<std::size_t>(k)];
    if (needs_precisions) {
      obs.precision = precisions[static_cast<std::size_t>(k)];
      obs.has_precision = true;
      state.groups[static_cast<std::size_t>(i)].precisions.push_back(obs.precision);
    }
    state.groups[static_cast<std::size_t>(i)].responses.push_back(obs.response);
    state.observations.push_back(obs);
    touched[static_cast<std::size_t>(i)] = true;
  }
  for (int i = 0; i < state.design.d(); ++i)
    if (touched[static_cast<std::size_t>(i)]) detail::refit_group(state, i);
  detail::recompute_uv(state);
  state.remaining -= plan.size;
  state.run_index += 1;
  state.capped = state.capped || plan.capped;
  state.pending.reset();
}

}  // namespace rsd
