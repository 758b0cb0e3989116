#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rsd/error_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/rng.hpp"

namespace rsd {

/// Linear-predictor basis f(x). Only the bases used by the built-in studies
/// are provided; eta(x, theta) = f(x)' theta for all of them.
class Basis {
 public:
  enum class Kind { Intercept, TwoTreatment, Factorial22, Quadratic };

  static Basis intercept() { return Basis(Kind::Intercept, 1, 1, "intercept"); }
  static Basis two_treatment() { return Basis(Kind::TwoTreatment, 2, 2, "two_treatment"); }
  static Basis factorial22() { return Basis(Kind::Factorial22, 2, 4, "factorial22"); }
  static Basis quadratic() { return Basis(Kind::Quadratic, 1, 3, "quadratic"); }

  static Basis from_name(std::string_view name) {
    if (name == "intercept") return intercept();
    if (name == "two_treatment") return two_treatment();
    if (name == "factorial22") return factorial22();
    if (name == "quadratic") return quadratic();
    throw invalid_input("unknown basis: " + std::string(name));
  }

  Kind kind() const noexcept { return kind_; }
  int input_dim() const noexcept { return input_dim_; }
  int dim() const noexcept { return dim_; }
  std::string_view name() const noexcept { return name_; }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim_) throw invalid_input("basis: wrong input dimension");
    Eigen::VectorXd f(dim_);
    switch (kind_) {
      case Kind::Intercept:
        f << 1.0;
        break;
      case Kind::TwoTreatment:
        f = x;
        break;
      case Kind::Factorial22:
        f << 1.0, x[0], x[1], x[0] * x[1];
        break;
      case Kind::Quadratic:
        f << 1.0, x[0], x[0] * x[0];
        break;
    }
    return f;
  }

  Eigen::VectorXd eval(double x) const {
    Eigen::VectorXd v(1);
    v << x;
    return eval(v);
  }

 private:
  Basis(Kind k, int s, int p, const char* n) : kind_(k), input_dim_(s), dim_(p), name_(n) {}
  Kind kind_;
  int input_dim_;
  int dim_;
  const char* name_;
};

/// An n-point deterministic design: d distinct support rows with allocation
/// weights summing to one.
struct Design {
  Eigen::MatrixXd support;  // d x s
  Eigen::VectorXd weights;  // d
  int n = 0;

  int d() const noexcept { return static_cast<int>(support.rows()); }

  void validate() const {
    if (d() < 1) throw invalid_input("design: needs at least one support point");
    if (weights.size() != d()) throw invalid_input("design: weight/support size mismatch");
    if (n < 1) throw invalid_input("design: n must be >= 1");
    double sum = 0.0;
    for (int i = 0; i < d(); ++i) {
      if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
        throw invalid_input("design: weights must lie in [0, 1]");
      sum += weights[i];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw invalid_input("design: weights must sum to 1");
    for (int i = 0; i < d(); ++i)
      for (int j = i + 1; j < d(); ++j)
        if (support.row(i) == support.row(j))
          throw invalid_input("design: support points must be distinct");
  }
};

/// A data-independent random design: a finite mixture of deterministic designs
/// sharing support and budget.
struct RandomDesign {
  struct Atom {
    Design design;
    double probability = 0.0;
  };
  std::vector<Atom> atoms;

  void validate() const {
    if (atoms.empty()) throw invalid_input("random design: no atoms");
    double sum = 0.0;
    for (const auto& a : atoms) {
      a.design.validate();
      if (!(a.probability > 0.0 && a.probability <= 1.0))
        throw invalid_input("random design: atom probabilities must lie in (0, 1]");
      if (a.design.n != atoms.front().design.n)
        throw invalid_input("random design: atoms must share the budget n");
      if (a.design.support != atoms.front().design.support)
        throw invalid_input("random design: atoms must share the support");
      sum += a.probability;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw invalid_input("random design: probabilities must sum to 1");
  }
};

/// Draw one realization; deterministic designs pass through via single atoms.
inline const Design& sample_design(const RandomDesign& random, Stream& stream) {
  if (random.atoms.size() == 1) return random.atoms.front().design;
  std::vector<double> probs;
  probs.reserve(random.atoms.size());
  for (const auto& a : random.atoms) probs.push_back(a.probability);
  return random.atoms[static_cast<std::size_t>(stream.categorical(probs))].design;
}

inline Eigen::MatrixXd moment_matrix(const Design& design, const Basis& basis) {
  const int p = basis.dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < design.d(); ++i) {
    const Eigen::VectorXd f = basis.eval(design.support.row(i).transpose());
    m += design.weights[i] * f * f.transpose();
  }
  return m;
}

/// Expected information F = n * mu * M for a linear predictor; the gradient of
/// the predictor is f(x), independent of theta.
inline Eigen::MatrixXd fisher_matrix(const Design& design, const Basis& basis,
                                     const ErrorModel& model) {
  return design.n * model.elemental_info() * moment_matrix(design, basis);
}

/// Condition warning for near-singular symmetric matrices.
inline bool ill_conditioned(const Eigen::MatrixXd& m, double threshold = 1e12) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return !(lo > 0.0) || hi > threshold * lo;
}

/// Cramer-Rao bound F^{-1} through a symmetric factorization.
inline Eigen::MatrixXd crlb(const Design& design, const Basis& basis, const ErrorModel& model) {
  const Eigen::MatrixXd f = fisher_matrix(design, basis, model);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0) ||
      es.eigenvalues().maxCoeff() > 1e15 * es.eigenvalues().minCoeff())
    throw numeric_error("crlb: singular Fisher information");
  Eigen::LLT<Eigen::MatrixXd> llt(f);
  if (llt.info() != Eigen::Success) throw numeric_error("crlb: factorization failed");
  return llt.solve(Eigen::MatrixXd::Identity(f.rows(), f.cols()));
}

struct Criterion {
  enum class Kind { D, A, G };
  Kind kind = Kind::D;
  int g_grid = 1001;
};

namespace detail {

inline void require_symmetric_psd(const Eigen::MatrixXd& m, const char* who) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw invalid_input(std::string(who) + ": matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw invalid_input(std::string(who) + ": matrix must be positive semi-definite");
}

inline double g_value(const Eigen::MatrixXd& inv_scale, const Basis& basis, int grid,
                      double lo = -1.0, double hi = 1.0) {
  if (basis.input_dim() != 1)
    throw invalid_input("G criterion: needs a one-dimensional design region");
  if (grid < 2) throw invalid_input("G criterion: grid must have >= 2 points");
  double worst = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / (grid - 1);
    const Eigen::VectorXd f = basis.eval(x);
    worst = std::max(worst, f.dot(inv_scale * f));
  }
  return worst;
}

}  // namespace detail

/// Criterion value with the conventional input scale: D takes the information
/// matrix F and returns |F|^{-1/p}; A and G take an inverse-scale matrix
/// (F^{-1} or a covariance) and return its trace / worst predicted variance
/// over [-1, 1].
inline double criterion_value(const Eigen::MatrixXd& matrix, const Criterion& criterion,
                              const Basis& basis) {
  detail::require_symmetric_psd(matrix, "criterion_value");
  const int p = static_cast<int>(matrix.rows());
  switch (criterion.kind) {
    case Criterion::Kind::D: {
      const double det = matrix.determinant();
      if (!(det > 0.0)) throw invalid_input("criterion_value: D needs a nonsingular matrix");
      return std::pow(det, -1.0 / p);
    }
    case Criterion::Kind::A:
      return matrix.trace();
    case Criterion::Kind::G:
      return detail::g_value(matrix, basis, criterion.g_grid);
  }
  throw invalid_input("criterion_value: unknown criterion");
}

/// Criterion value of an inverse-scale matrix (bound or covariance) for all
/// three criteria; monotone in the Loewner order. Used by the efficiency
/// ratios, where D must act on the same scale as A and G.
inline double criterion_value_inverse_scale(const Eigen::MatrixXd& v, const Criterion& criterion,
                                            const Basis& basis) {
  detail::require_symmetric_psd(v, "criterion_value_inverse_scale");
  const int p = static_cast<int>(v.rows());
  switch (criterion.kind) {
    case Criterion::Kind::D: {
      const double det = v.determinant();
      if (!(det > 0.0))
        throw invalid_input("criterion_value_inverse_scale: singular matrix under D");
      return std::pow(det, 1.0 / p);
    }
    case Criterion::Kind::A:
      return v.trace();
    case Criterion::Kind::G:
      return detail::g_value(v, basis, criterion.g_grid);
  }
  throw invalid_input("criterion_value_inverse_scale: unknown criterion");
}

enum class BuiltinDesignName { Balanced2, Factorial22, GOptimalQuadratic };

inline BuiltinDesignName builtin_design_from_name(std::string_view name) {
  if (name == "balanced2") return BuiltinDesignName::Balanced2;
  if (name == "factorial22") return BuiltinDesignName::Factorial22;
  if (name == "g_optimal_quadratic") return BuiltinDesignName::GOptimalQuadratic;
  throw invalid_input("unknown builtin design: " + std::string(name));
}

struct BuiltinDesign {
  Design deterministic;
  std::optional<RandomDesign> randomized;  // remainder randomization, when it applies
  Basis basis;
};

/// The reference designs of the built-in studies. The quadratic minimax design
/// splits the budget evenly over {-1, 0, 1}; when n mod 3 = 1 the deterministic
/// variant gives the leftover observation to -1 and the randomized variant
/// assigns it to one of the three points with probability 1/3 each.
inline BuiltinDesign builtin_design(BuiltinDesignName name, int n) {
  switch (name) {
    case BuiltinDesignName::Balanced2: {
      if (n < 2) throw invalid_input("balanced2: n must be >= 2");
      Design d;
      d.support.resize(2, 2);
      d.support << 1.0, 1.0, 1.0, 0.0;
      d.weights = Eigen::Vector2d(0.5, 0.5);
      d.n = n;
      return {d, std::nullopt, Basis::two_treatment()};
    }
    case BuiltinDesignName::Factorial22: {
      if (n < 4) throw invalid_input("factorial22: n must be >= 4");
      Design d;
      d.support.resize(4, 2);
      d.support << 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0;
      d.weights = Eigen::Vector4d::Constant(0.25);
      d.n = n;
      return {d, std::nullopt, Basis::factorial22()};
    }
    case BuiltinDesignName::GOptimalQuadratic: {
      if (n < 3) throw invalid_input("g_optimal_quadratic: n must be >= 3");
      if (n % 3 == 2)
        throw invalid_input("g_optimal_quadratic: n mod 3 = 2 is unsupported");
      Design base;
      base.support.resize(3, 1);
      base.support << -1.0, 0.0, 1.0;
      base.n = n;
      if (n % 3 == 0) {
        base.weights = Eigen::Vector3d::Constant(1.0 / 3.0);
        return {base, std::nullopt, Basis::quadratic()};
      }
      const double m = (n - 1) / 3;
      Design det = base;
      det.weights = Eigen::Vector3d(m + 1, m, m) / n;
      RandomDesign rd;
      for (int k = 0; k < 3; ++k) {
        Design atom = base;
        Eigen::Vector3d counts(m, m, m);
        counts[k] += 1.0;
        atom.weights = counts / n;
        rd.atoms.push_back({atom, 1.0 / 3.0});
      }
      return {det, rd, Basis::quadratic()};
    }
  }
  throw invalid_input("builtin_design: unknown name");
}

/// Optimal allocation weights on a fixed support by multiplicative-weight
/// iteration. D uses the standardized variance sensitivity, A the trace
/// sensitivity; G updates along the subgradient at the current worst
/// prediction point, damped to keep the iteration stable.
inline Eigen::VectorXd reference_weights(const Criterion& criterion, const Eigen::MatrixXd& support,
                                         const Basis& basis, double tol = 1e-8,
                                         int max_iterations = 200000) {
  const int d = static_cast<int>(support.rows());
  const int p = basis.dim();
  Eigen::MatrixXd fx(d, p);
  for (int i = 0; i < d; ++i) fx.row(i) = basis.eval(support.row(i).transpose()).transpose();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(d, 1.0 / d);

  const double exponent = criterion.kind == Criterion::Kind::D ? 1.0 : 0.5;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::MatrixXd m = fx.transpose() * w.asDiagonal() * fx;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success)
      throw numeric_error("reference_weights: singular moment matrix");
    Eigen::VectorXd phi(d);
    switch (criterion.kind) {
      case Criterion::Kind::D:
        for (int i = 0; i < d; ++i) phi[i] = fx.row(i).dot(ldlt.solve(fx.row(i).transpose()));
        break;
      case Criterion::Kind::A: {
        const Eigen::MatrixXd minv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        for (int i = 0; i < d; ++i) phi[i] = (minv * fx.row(i).transpose()).squaredNorm();
        break;
      }
      case Criterion::Kind::G: {
        const Eigen::MatrixXd minv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        // The worst prediction point is usually a tie set; averaging the
        // subgradient over all near-maximizers keeps the iteration from
        // chasing a single vertex.
        std::vector<Eigen::VectorXd> fs;
        std::vector<double> vals;
        double worst = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < criterion.g_grid; ++k) {
          const double x = -1.0 + 2.0 * static_cast<double>(k) / (criterion.g_grid - 1);
          const Eigen::VectorXd f = basis.eval(x);
          fs.push_back(f);
          vals.push_back(f.dot(minv * f));
          worst = std::max(worst, vals.back());
        }
        phi.setZero();
        int ties = 0;
        for (std::size_t k = 0; k < fs.size(); ++k) {
          if (vals[k] < worst * (1.0 - 1e-9)) continue;
          ++ties;
          for (int i = 0; i < d; ++i) {
            const double proj = fx.row(i).dot(minv * fs[k]);
            phi[i] += proj * proj;
          }
        }
        phi /= static_cast<double>(ties);
        break;
      }
    }
    const double mean_phi = w.dot(phi);
    Eigen::VectorXd next(d);
    for (int i = 0; i < d; ++i) next[i] = w[i] * std::pow(phi[i] / mean_phi, exponent);
    next /= next.sum();
    const double delta = (next - w).cwiseAbs().maxCoeff();
    w = next;
    if (delta < tol * 1e-2) break;
  }
  return w;
}

}  // namespace rsd
