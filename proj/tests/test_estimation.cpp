#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rsd/design.hpp"
#include "rsd/error_model.hpp"
#include "rsd/estimation.hpp"
#include "rsd/rng.hpp"

using rsd::ErrorModel;

TEST_CASE("location MLE closed cases") {
  const auto normal = ErrorModel::generalized_normal(2.0, 1.0);
  CHECK(rsd::mle_location(normal, std::vector<double>{1.0, 2.0, 3.0}) ==
        Catch::Approx(2.0).margin(1e-9));

  const auto cauchy = ErrorModel::cauchy(1.0);
  CHECK(rsd::mle_location(cauchy, std::vector<double>{-1.0, 0.0, 1.0}) ==
        Catch::Approx(0.0).margin(1e-9));
  CHECK(rsd::mle_location(cauchy, std::vector<double>{4.2}) == 4.2);

  // Frozen from a bisection oracle at 1e-9 resolution on [-10, 10]; the score
  // has three roots and the likelihood picks the one at the data mass.
  CHECK(rsd::mle_location(cauchy, std::vector<double>{0.0, 0.0, 5.0}) ==
        Catch::Approx(0.09889850788487964).margin(1e-7));

  CHECK_THROWS_AS(rsd::mle_location(cauchy, std::vector<double>{}), rsd::invalid_input);
}

TEST_CASE("location MLE is shift equivariant") {
  rsd::Stream s(5, 0);
  for (const auto& m : {ErrorModel::cauchy(1.0), ErrorModel::generalized_normal(10.0, 1.0)}) {
    for (int size : {2, 5, 17}) {
      std::vector<double> y(static_cast<std::size_t>(size));
      for (auto& v : y) v = 1.0 + m.sample_residual(s);
      const double base = rsd::mle_location(m, y);
      const double shift = 37.25;
      std::vector<double> y2 = y;
      for (auto& v : y2) v += shift;
      CHECK(rsd::mle_location(m, y2) - base == Catch::Approx(shift).margin(1e-9));
    }
  }
}

TEST_CASE("location MLE survives an extreme outlier stretching the grid") {
  const auto cauchy = ErrorModel::cauchy(1.0);
  std::vector<double> y;
  rsd::Stream s(17, 0);
  for (int i = 0; i < 20; ++i) y.push_back(0.1 * s.normal());
  y.push_back(-8548.3);  // a uniform 512-point grid over the span is ~17 units coarse
  const double eta = rsd::mle_location(cauchy, y);
  CHECK(std::abs(eta) < 1.0);
  // stationarity
  double score = 0.0;
  for (double v : y) score += cauchy.score(v - eta);
  CHECK(std::abs(score) < 1e-8 * (1.0 + y.size()));
}

TEST_CASE("theta MLE: weighted least squares on known precisions") {
  // Saturated two-treatment map: theta = (eta2, eta1 - eta2).
  Eigen::MatrixXd rows(5, 2);
  rows << 1, 1, 1, 1, 1, 0, 1, 0, 1, 0;
  Eigen::VectorXd y(5);
  y << 3.0, 3.0, 1.0, 1.0, 1.0;
  Eigen::VectorXd a(5);
  a << 0.7, 1.9, 0.4, 2.2, 1.1;
  const auto nig = ErrorModel::hetero_normal_gamma(1.0, 1.0);
  const auto fit = rsd::mle_theta(nig, rows, y, &a);
  REQUIRE(fit.converged);
  CHECK(fit.theta_hat[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(fit.theta_hat[1] == Catch::Approx(2.0).margin(1e-12));
  CHECK(fit.eta_hat[0] == Catch::Approx(3.0).margin(1e-12));
  CHECK(fit.eta_hat[1] == Catch::Approx(1.0).margin(1e-12));

  CHECK_THROWS_AS(rsd::mle_theta(nig, rows, y, nullptr), rsd::invalid_input);
}

TEST_CASE("theta MLE: saturated factorial interpolates the group MLEs") {
  const auto cauchy = ErrorModel::cauchy(1.0);
  const auto built = rsd::builtin_design(rsd::BuiltinDesignName::Factorial22, 8);
  rsd::Stream s(23, 0);
  Eigen::MatrixXd rows(8, 4);
  Eigen::VectorXd y(8);
  Eigen::MatrixXd unique_rows(4, 4);
  for (int i = 0; i < 4; ++i) {
    const Eigen::VectorXd f = built.basis.eval(built.deterministic.support.row(i).transpose());
    unique_rows.row(i) = f.transpose();
    for (int k = 0; k < 2; ++k) {
      rows.row(2 * i + k) = f.transpose();
      y[2 * i + k] = static_cast<double>(i) + cauchy.sample_residual(s);
    }
  }
  const auto fit = rsd::mle_theta(cauchy, rows, y, nullptr);
  REQUIRE(fit.converged);
  const Eigen::VectorXd fitted = unique_rows * fit.theta_hat;
  for (int i = 0; i < 4; ++i) {
    CHECK(fitted[i] == Catch::Approx(fit.eta_hat[i]).margin(1e-10));
    const double direct =
        rsd::mle_location(cauchy, std::vector<double>{y[2 * i], y[2 * i + 1]});
    CHECK(fit.eta_hat[i] == Catch::Approx(direct).margin(1e-9));
  }
}

TEST_CASE("theta MLE: saturated quadratic recovers the truth at n = 100") {
  const auto flat = ErrorModel::generalized_normal(10.0, 1.0);
  const auto basis = rsd::Basis::quadratic();
  const Eigen::Vector3d theta(1.0, 1.0, 1.0);
  rsd::Stream s(29, 0);
  Eigen::MatrixXd rows(99, 3);
  Eigen::VectorXd y(99);
  const double xs[3] = {-1.0, 0.0, 1.0};
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd f = basis.eval(xs[i]);
    for (int k = 0; k < 33; ++k) {
      rows.row(33 * i + k) = f.transpose();
      y[33 * i + k] = f.dot(theta) + flat.sample_residual(s);
    }
  }
  const auto fit = rsd::mle_theta(flat, rows, y, nullptr);
  REQUIRE(fit.converged);
  // standard errors from the expected information
  const Eigen::MatrixXd F = flat.elemental_info() * rows.transpose() * rows;
  const Eigen::MatrixXd cov = F.llt().solve(Eigen::MatrixXd::Identity(3, 3));
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(fit.theta_hat[j] - theta[j]) < 3.0 * std::sqrt(cov(j, j)));
}

TEST_CASE("theta MLE: non-saturated path uses Fisher scoring") {
  const auto flat = ErrorModel::generalized_normal(10.0, 1.0);
  const auto basis = rsd::Basis::quadratic();
  const Eigen::Vector3d theta(1.0, 0.5, -0.5);
  rsd::Stream s(31, 0);
  const double xs[4] = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};  // d = 4 > p = 3
  Eigen::MatrixXd rows(120, 3);
  Eigen::VectorXd y(120);
  for (int i = 0; i < 4; ++i) {
    const Eigen::VectorXd f = basis.eval(xs[i]);
    for (int k = 0; k < 30; ++k) {
      rows.row(30 * i + k) = f.transpose();
      y[30 * i + k] = f.dot(theta) + flat.sample_residual(s);
    }
  }
  const auto fit = rsd::mle_theta(flat, rows, y, nullptr);
  REQUIRE(fit.converged);
  CHECK(fit.final_gradient_norm <= 1e-8 * (1.0 + 120.0));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.theta_hat[j] - theta[j]) < 0.25);

  Eigen::MatrixXd deficient(6, 3);
  deficient.setZero();
  deficient.col(0).setOnes();
  CHECK_THROWS_AS(rsd::mle_theta(flat, deficient, y.head(6), nullptr), rsd::numeric_error);
}

TEST_CASE("conditional covariance of the weighted estimator matches its information") {
  // Precisions drawn once and held fixed; only the responses vary.
  const auto nig = ErrorModel::hetero_normal_gamma(0.25, 0.25);
  const auto built = rsd::builtin_design(rsd::BuiltinDesignName::Balanced2, 30);
  rsd::Stream setup(41, 0);
  const int n = 30;
  Eigen::MatrixXd rows(n, 2);
  Eigen::VectorXd a(n);
  Eigen::VectorXd eta(n);
  for (int j = 0; j < n; ++j) {
    const int i = j < 15 ? 0 : 1;
    rows.row(j) = built.basis.eval(built.deterministic.support.row(i).transpose()).transpose();
    a[j] = setup.gamma(0.25, 0.25);
    eta[j] = i == 0 ? 3.0 : 1.0;
  }
  const Eigen::MatrixXd H = rows.transpose() * a.asDiagonal() * rows;
  const Eigen::MatrixXd Hinv = H.llt().solve(Eigen::MatrixXd::Identity(2, 2));

  const int reps = 2000;
  Eigen::MatrixXd thetas(reps, 2);
  rsd::Stream s(42, 0);
  for (int r = 0; r < reps; ++r) {
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) y[j] = eta[j] + s.normal() / std::sqrt(a[j]);
    thetas.row(r) = rsd::mle_theta(nig, rows, y, &a).theta_hat.transpose();
  }
  const Eigen::RowVectorXd mean = thetas.colwise().mean();
  const Eigen::MatrixXd centered = thetas.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / (reps - 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(std::abs(cov(i, j) - Hinv(i, j)) < 0.10 * std::abs(Hinv(i, j)));
}
