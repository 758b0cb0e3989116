#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "rsd/errors.hpp"
#include "rsd/quadrature.hpp"
#include "rsd/rng.hpp"

namespace rsd {

enum class Family { GeneralizedNormal, Cauchy, HeteroNormalGamma };

/// Per-observation moment coefficients of the standardized error law.
/// nu20 = E[l'^2], nu02 = E[(l'' + E[l'^2])^2], nu11 = E[l'(l'' + E[l'^2])];
/// gamma_formula is the printed coefficient [(nu02*nu20 - nu11)/nu20^3]^{1/2},
/// gamma_alt is sqrt(Var[i/mu]) computed directly. The two coincide for
/// symmetric laws (nu11 = 0) but are both reported.
struct MomentTable {
  double mu = 0.0;
  double nu20 = 0.0;
  double nu02 = 0.0;
  double nu11 = 0.0;
  double gamma_formula = 0.0;
  double gamma_alt = 0.0;
};

/// A location-family error law (generalized normal with shape zeta >= 2, or
/// Cauchy), or the conditionally-normal law with gamma-distributed precision.
/// Immutable after construction; normalizing constant and elemental
/// information are cached here.
class ErrorModel {
 public:
  static ErrorModel generalized_normal(double zeta, double tau) {
    if (!(zeta >= 2.0)) throw invalid_input("generalized_normal: zeta must be >= 2");
    if (!(tau > 0.0)) throw invalid_input("generalized_normal: tau must be > 0");
    ErrorModel m(Family::GeneralizedNormal);
    m.zeta_ = zeta;
    m.tau_ = tau;
    m.init_location_constants();
    return m;
  }

  static ErrorModel cauchy(double tau) {
    if (!(tau > 0.0)) throw invalid_input("cauchy: tau must be > 0");
    ErrorModel m(Family::Cauchy);
    m.tau_ = tau;
    m.init_location_constants();
    return m;
  }

  static ErrorModel hetero_normal_gamma(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0))
      throw invalid_input("hetero_normal_gamma: alpha and beta must be > 0");
    ErrorModel m(Family::HeteroNormalGamma);
    m.alpha_ = alpha;
    m.beta_ = beta;
    m.mu_ = alpha / beta;
    return m;
  }

  Family family() const noexcept { return family_; }
  bool is_location_family() const noexcept { return family_ != Family::HeteroNormalGamma; }
  double zeta() const noexcept { return zeta_; }
  double tau() const noexcept { return tau_; }
  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

  /// log f(residual | 0) including the normalizing constant.
  double log_density(double residual) const {
    require_location("log_density");
    if (!std::isfinite(residual)) throw invalid_input("log_density: non-finite residual");
    return unnormalized_log_density(residual) - log_norm_;
  }

  /// d/d eta of the observation log-likelihood at residual = y - eta.
  double score(double residual) const {
    require_location("score");
    if (!std::isfinite(residual)) throw invalid_input("score: non-finite residual");
    if (family_ == Family::Cauchy) return 2.0 * residual / (tau_ * tau_ + residual * residual);
    const double z = std::abs(residual) / tau_;
    const double mag = std::pow(z, zeta_ - 1.0) / tau_;
    return residual >= 0.0 ? mag : -mag;
  }

  /// Per-observation observed information -d^2/d eta^2 log f. May be negative
  /// for heavy-tailed laws (Cauchy with |residual| > tau).
  double observed_info(double residual) const {
    require_location("observed_info");
    if (!std::isfinite(residual)) throw invalid_input("observed_info: non-finite residual");
    const double t2 = tau_ * tau_;
    if (family_ == Family::Cauchy) {
      const double r2 = residual * residual;
      const double denom = t2 + r2;
      return 2.0 * (t2 - r2) / (denom * denom);
    }
    return (zeta_ - 1.0) * std::pow(std::abs(residual) / tau_, zeta_ - 2.0) / t2;
  }

  /// Elemental information mu = E[i]. Location families: adaptive quadrature
  /// against the density (cached at construction); precision mixture: alpha/beta.
  double elemental_info() const noexcept { return mu_; }

  MomentTable moment_table() const {
    MomentTable t;
    t.mu = mu_;
    if (family_ == Family::HeteroNormalGamma) {
      t.nu20 = alpha_ / beta_;
      t.nu02 = alpha_ / (beta_ * beta_);
      t.nu11 = 0.0;
      t.gamma_alt = std::sqrt(1.0 / alpha_);
    } else {
      t.nu20 = expect([this](double e) { const double s = score(e); return s * s; });
      t.nu02 = expect([this](double e) { const double d = mu_ - observed_info(e); return d * d; });
      t.nu11 = expect([this](double e) { return score(e) * (mu_ - observed_info(e)); });
      const double var_rel = expect([this](double e) {
        const double d = observed_info(e) / mu_ - 1.0;
        return d * d;
      });
      t.gamma_alt = std::sqrt(std::max(0.0, var_rel));
    }
    const double radicand = (t.nu02 * t.nu20 - t.nu11) / (t.nu20 * t.nu20 * t.nu20);
    t.gamma_formula = std::sqrt(std::max(0.0, radicand));
    return t;
  }

  /// One residual draw (location families).
  double sample_residual(Stream& stream) const {
    require_location("sample_residual");
    if (family_ == Family::Cauchy)
      return tau_ * std::tan(3.14159265358979323846 * (stream.uniform() - 0.5));
    const double g = stream.gamma(1.0 / zeta_, 1.0);
    const double mag = tau_ * std::pow(zeta_ * g, 1.0 / zeta_);
    return (stream.next_u32() & 1u) ? mag : -mag;
  }

  /// One (precision, residual) draw for the precision-mixture model.
  std::pair<double, double> sample_precision_residual(Stream& stream) const {
    if (family_ != Family::HeteroNormalGamma)
      throw invalid_input("sample_precision_residual: model has no random precision");
    const double a = stream.gamma(alpha_, beta_);
    return {a, stream.normal() / std::sqrt(a)};
  }

  /// log density of a response at known precision (precision-mixture model).
  double log_density_weighted(double precision, double residual) const {
    if (family_ != Family::HeteroNormalGamma)
      throw invalid_input("log_density_weighted: model has no precision");
    if (!(precision > 0.0)) throw invalid_input("log_density_weighted: precision must be > 0");
    return 0.5 * (std::log(precision) - std::log(2.0 * 3.14159265358979323846)) -
           0.5 * precision * residual * residual;
  }

  /// E[g(residual)] under the standardized error density.
  template <class G>
  double expect(G&& g) const {
    require_location("expect");
    if (family_ == Family::Cauchy) {
      // residual = tau * tan(phi) maps the real line to a finite interval and
      // the density to the constant 1/pi.
      constexpr double kHalfPi = 1.57079632679489661923;
      auto integrand = [this, &g](double phi) {
        return g(tau_ * std::tan(phi)) / 3.14159265358979323846;
      };
      return integrate_or_throw(integrand, -kHalfPi, kHalfPi, 1e-9, "cauchy moment", 1e-14,
                                4000, 8);
    }
    auto integrand = [this, &g](double e) {
      return g(e) * std::exp(unnormalized_log_density(e) - log_norm_);
    };
    return integrate_or_throw(integrand, -50.0 * tau_, 50.0 * tau_, 1e-9, "gnd moment", 1e-14,
                              4000, 32);
  }

 private:
  explicit ErrorModel(Family f) : family_(f) {}

  void require_location(const char* op) const {
    if (family_ == Family::HeteroNormalGamma)
      throw invalid_input(std::string(op) + ": not defined for the precision-mixture model");
  }

  double unnormalized_log_density(double residual) const {
    if (family_ == Family::Cauchy) {
      const double z = residual / tau_;
      return -std::log1p(z * z);
    }
    return -std::pow(std::abs(residual) / tau_, zeta_) / zeta_;
  }

  void init_location_constants() {
    if (family_ == Family::Cauchy) {
      log_norm_ = std::log(3.14159265358979323846 * tau_);
      // mu by quadrature over the tangent-transformed line.
      constexpr double kHalfPi = 1.57079632679489661923;
      auto integrand = [this](double phi) {
        return observed_info_unchecked(tau_ * std::tan(phi)) / 3.14159265358979323846;
      };
      mu_ = integrate_or_throw(integrand, -kHalfPi, kHalfPi, 1e-10, "cauchy elemental info",
                               0.0, 4000, 8);
    } else {
      const double z = integrate_or_throw(
          [this](double e) { return std::exp(unnormalized_log_density(e)); }, -50.0 * tau_,
          50.0 * tau_, 1e-12, "gnd normalizing constant", 0.0, 4000, 32);
      log_norm_ = std::log(z);
      mu_ = integrate_or_throw(
          [this](double e) {
            return observed_info_unchecked(e) * std::exp(unnormalized_log_density(e) - log_norm_);
          },
          -50.0 * tau_, 50.0 * tau_, 1e-10, "gnd elemental info", 0.0, 4000, 32);
    }
    if (!(mu_ > 0.0) || !std::isfinite(mu_))
      throw numeric_error("elemental information must be positive and finite");
  }

  // As observed_info but callable before construction finishes.
  double observed_info_unchecked(double residual) const {
    const double t2 = tau_ * tau_;
    if (family_ == Family::Cauchy) {
      const double r2 = residual * residual;
      const double denom = t2 + r2;
      return 2.0 * (t2 - r2) / (denom * denom);
    }
    return (zeta_ - 1.0) * std::pow(std::abs(residual) / tau_, zeta_ - 2.0) / t2;
  }

  Family family_;
  double zeta_ = 0.0;
  double tau_ = 0.0;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  double log_norm_ = 0.0;
  double mu_ = 0.0;
};

}  // namespace rsd
