#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/montecarlo.hpp"

// Canned scenario builders for the built-in simulation studies, shared by the
// CLI reproduction targets and the acceptance suite.

namespace rsd::studies {

inline constexpr std::uint64_t kSeedTwoTreatment = 20260311;
inline constexpr std::uint64_t kSeedMinimaxQuadratic = 20260312;
inline constexpr std::uint64_t kSeedFactorial = 5;

/// Two-treatment difference-in-means study with gamma-distributed precisions:
/// balanced design, eta_1 = eta_2 = 1, contrast on the treatment effect.
inline ScenarioConfig nig_two_treatment(double alpha, double beta, int n, Strategy strategy,
                                        int iterations, std::uint64_t seed, int threads = 1) {
  BuiltinDesign built = builtin_design(BuiltinDesignName::Balanced2, n);
  ScenarioConfig config(ErrorModel::hetero_normal_gamma(alpha, beta), built.basis,
                        built.deterministic);
  config.strategy = strategy;
  config.theta_true = Eigen::Vector2d(1.0, 0.0);  // eta = (1, 1)
  config.n1 = 4;
  config.iterations = iterations;
  config.seed = seed;
  config.threads = threads;
  config.contrast = Eigen::Vector2d(0.0, 1.0);
  return config;
}

/// Two-factor factorial study with Cauchy errors, theta = (1, 1, 1, 1).
inline ScenarioConfig cauchy_factorial(int n, Strategy strategy, int iterations,
                                       std::uint64_t seed, int threads = 1) {
  BuiltinDesign built = builtin_design(BuiltinDesignName::Factorial22, n);
  ScenarioConfig config(ErrorModel::cauchy(1.0), built.basis, built.deterministic);
  config.strategy = strategy;
  config.theta_true = Eigen::Vector4d(1.0, 1.0, 1.0, 1.0);
  config.n1 = 8;
  config.iterations = iterations;
  config.seed = seed;
  config.threads = threads;
  return config;
}

struct QuadraticDesigns {
  Design deterministic;
  RandomDesign randomized;
  Basis basis;
};

/// Minimax designs on {-1, 0, 1} for any budget with a remainder. For
/// n mod 3 = 1 these are the built-in variants. For n mod 3 = 2 (which the
/// built-in rejects) the deterministic design gives both leftover observations
/// to -1 and the randomized design assigns them to one of the three distinct
/// pairs of points with probability 1/3 each.
inline QuadraticDesigns quadratic_minimax_designs(int n) {
  if (n % 3 == 1) {
    BuiltinDesign built = builtin_design(BuiltinDesignName::GOptimalQuadratic, n);
    return {built.deterministic, *built.randomized, built.basis};
  }
  if (n % 3 != 2) throw invalid_input("quadratic_minimax_designs: budget has no remainder");
  Design base;
  base.support.resize(3, 1);
  base.support << -1.0, 0.0, 1.0;
  base.n = n;
  const double m = (n - 2) / 3;
  Design det = base;
  det.weights = Eigen::Vector3d(m + 2, m, m) / n;
  RandomDesign rd;
  for (int skip = 2; skip >= 0; --skip) {  // atom leaves point `skip` without an extra
    Design atom = base;
    Eigen::Vector3d counts(m, m, m);
    for (int i = 0; i < 3; ++i)
      if (i != skip) counts[i] += 1.0;
    atom.weights = counts / n;
    rd.atoms.push_back({atom, 1.0 / 3.0});
  }
  return {det, rd, Basis::quadratic()};
}

/// The four arms of the quadratic minimax study: the deterministic and
/// randomized a-priori designs plus the one-step adaptive design initialized
/// from each.
struct QuadraticArms {
  ScenarioConfig fixed_deterministic;
  ScenarioConfig fixed_randomized;
  ScenarioConfig adaptive_deterministic;
  ScenarioConfig adaptive_randomized;
};

inline QuadraticArms quadratic_minimax_arms(int n, int iterations, std::uint64_t seed,
                                            int threads = 1) {
  const QuadraticDesigns designs = quadratic_minimax_designs(n);
  const ErrorModel model = ErrorModel::generalized_normal(10.0, 1.0);
  auto make = [&](Strategy strategy, bool randomized) {
    ScenarioConfig config(model, designs.basis, designs.deterministic);
    if (randomized) config.random_design = designs.randomized;
    config.strategy = strategy;
    config.theta_true = Eigen::Vector3d(1.0, 1.0, 1.0);
    config.n1 = 6;
    config.iterations = iterations;
    config.seed = seed;
    config.threads = threads;
    return config;
  };
  return {make(Strategy::Fixed, false), make(Strategy::Fixed, true),
          make(Strategy::DRSD, false), make(Strategy::DRSD, true)};
}

/// CRLB of the criterion-optimal reference design on {-1, 0, 1} at budget n.
inline Eigen::MatrixXd quadratic_reference_crlb(const Criterion& criterion, int n,
                                                const ErrorModel& model) {
  Design ref;
  ref.support.resize(3, 1);
  ref.support << -1.0, 0.0, 1.0;
  ref.n = n;
  ref.weights = reference_weights(criterion, ref.support, Basis::quadratic());
  const Eigen::MatrixXd f = fisher_matrix(ref, Basis::quadratic(), model);
  return Eigen::LLT<Eigen::MatrixXd>(f).solve(Eigen::MatrixXd::Identity(3, 3));
}

}  // namespace rsd::studies
