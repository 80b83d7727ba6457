#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "nowcast/errors.hpp"
#include "nowcast/linear.hpp"
#include "nowcast/rng.hpp"

using namespace nowcast;

namespace {

struct Instance {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Instance random_instance(std::uint64_t seed, int n, int p) {
  Rng rng(seed);
  Instance inst;
  inst.x.resize(n, p);
  inst.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) inst.x(i, j) = rng.normal();
  }
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta[j] = (j % 3 == 0) ? rng.normal() : 0.0;
  for (int i = 0; i < n; ++i) inst.y[i] = inst.x.row(i).dot(beta) + 0.3 * rng.normal();
  return inst;
}

// Closed-form ridge solution without intercept.
Eigen::VectorXd ridge_closed_form(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  double lambda) {
  const int p = static_cast<int>(x.cols());
  const Eigen::MatrixXd gram = x.transpose() * x + lambda * Eigen::MatrixXd::Identity(p, p);
  return gram.ldlt().solve(x.transpose() * y);
}

FitOptions tight() {
  FitOptions options;
  options.tol = 1e-13;
  options.max_sweeps = 100000;
  options.fit_intercept = false;
  return options;
}

} // namespace

TEST_SUITE("linear") {

TEST_CASE("ar1 rejects a constant series") {
  Eigen::VectorXd y(4);
  y << 1, 1, 1, 1;
  CHECK_THROWS_AS(fit_ar1(y), DegenerateRegressorError);
}

TEST_CASE("ar1 recovers an exact autoregression") {
  Eigen::VectorXd y(4);
  y << 1.0, 0.5, 0.25, 0.125;
  const LinearFit fit = fit_ar1(y);
  CHECK(std::abs(fit.intercept) < 1e-10);
  CHECK(fit.coefficients[0] == doctest::Approx(0.5).epsilon(1e-10));

  Eigen::VectorXd last(1);
  last << 0.125;
  CHECK(predict_linear(fit, last) == doctest::Approx(0.0625));
}

TEST_CASE("penalty vanishes at lambda zero") {
  const Instance inst = random_instance(11, 30, 4);
  const Eigen::VectorXd ols = inst.x.colPivHouseholderQr().solve(inst.y);
  for (double alpha : {0.0, 0.5, 1.0}) {
    PenaltySpec spec;
    spec.lambda = 0.0;
    spec.alpha = alpha;
    const LinearFit fit = fit_penalized(inst.x, inst.y, spec, tight());
    CHECK(fit.converged);
    CHECK((fit.coefficients - ols).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("two-point instances match hand solutions") {
  Eigen::MatrixXd x(2, 1);
  x << 1, -1;
  Eigen::VectorXd y(2);
  y << 1, -1;

  PenaltySpec ridge;
  ridge.alpha = 0.0;
  ridge.lambda = 2.0;
  CHECK(fit_penalized(x, y, ridge, tight()).coefficients[0] == doctest::Approx(0.5));

  PenaltySpec lasso;
  lasso.alpha = 1.0;
  lasso.lambda = 1.0;
  CHECK(fit_penalized(x, y, lasso, tight()).coefficients[0] == doctest::Approx(0.75));
  lasso.lambda = 4.0;
  CHECK(fit_penalized(x, y, lasso, tight()).coefficients[0] == doctest::Approx(0.0));
}

TEST_CASE("published lasso refit configuration is accepted") {
  PenaltySpec spec;
  spec.lambda = 0.007;
  spec.alpha = 1.0;
  CHECK_NOTHROW(spec.validate(3));
  const Instance inst = random_instance(2, 20, 3);
  const LinearFit fit = fit_penalized(inst.x, inst.y, spec);
  CHECK(fit.converged);
}

TEST_CASE("elastic net interpolates between lasso and ridge") {
  const Instance inst = random_instance(21, 40, 6);
  PenaltySpec en;
  en.lambda = 3.0;

  en.alpha = 1.0;
  PenaltySpec lasso = en;
  lasso.alpha = 1.0;
  const auto enet1 = fit_penalized(inst.x, inst.y, en, tight());
  const auto las = fit_penalized(inst.x, inst.y, lasso, tight());
  CHECK((enet1.coefficients - las.coefficients).cwiseAbs().maxCoeff() < 1e-8);

  en.alpha = 0.0;
  const auto enet0 = fit_penalized(inst.x, inst.y, en, tight());
  const auto ridge = ridge_closed_form(inst.x, inst.y, en.lambda);
  CHECK((enet0.coefficients - ridge).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("lasso satisfies its stationarity conditions") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const Instance inst = random_instance(seed, 40, 8);
    PenaltySpec spec;
    spec.alpha = 1.0;
    spec.lambda = 4.0;
    FitOptions options = tight();
    options.fit_intercept = true;
    const LinearFit fit = fit_penalized(inst.x, inst.y, spec, options);
    REQUIRE(fit.converged);

    const Eigen::VectorXd r =
        inst.y - Eigen::VectorXd::Constant(inst.y.size(), fit.intercept) -
        inst.x * fit.coefficients;
    for (int j = 0; j < 8; ++j) {
      const double grad = 2.0 * inst.x.col(j).dot(r);
      if (fit.coefficients[j] == 0.0) {
        CHECK(std::abs(grad) <= spec.lambda + 1e-6);
      } else {
        const double sign = fit.coefficients[j] > 0 ? 1.0 : -1.0;
        CHECK(grad == doctest::Approx(spec.lambda * sign).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("objective never increases across sweeps") {
  const Instance inst = random_instance(33, 50, 10);
  PenaltySpec spec;
  spec.alpha = 0.7;
  spec.lambda = 2.5;

  double previous = std::numeric_limits<double>::infinity();
  for (int sweeps = 1; sweeps <= 12; ++sweeps) {
    FitOptions options;
    options.tol = 0.0; // run exactly `sweeps` sweeps
    options.max_sweeps = sweeps;
    const LinearFit fit = fit_penalized(inst.x, inst.y, spec, options);
    const double objective =
        penalized_objective(inst.x, inst.y, spec, fit.intercept, fit.coefficients);
    CHECK(objective <= previous + 1e-9);
    previous = objective;
  }
}

TEST_CASE("active sets shrink monotonically in lambda on orthonormal designs") {
  const Instance raw = random_instance(44, 30, 8);
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(raw.x).householderQ() *
      Eigen::MatrixXd::Identity(30, 8);
  PenaltySpec spec;
  spec.alpha = 1.0;

  std::vector<std::vector<int>> active_sets;
  for (double lambda : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    spec.lambda = lambda;
    const LinearFit fit = fit_penalized(q, raw.y, spec, tight());
    std::vector<int> active;
    for (int j = 0; j < 8; ++j) {
      if (fit.coefficients[j] != 0.0) active.push_back(j);
    }
    active_sets.push_back(active);
  }
  for (std::size_t i = 1; i < active_sets.size(); ++i) {
    for (int j : active_sets[i]) {
      const auto& prev = active_sets[i - 1];
      CHECK(std::find(prev.begin(), prev.end(), j) != prev.end());
    }
  }
}

TEST_CASE("shrunk solution beats the unpenalized one on the penalized objective") {
  const Instance inst = random_instance(55, 40, 6);
  PenaltySpec spec;
  spec.alpha = 0.4;
  spec.lambda = 5.0;
  const LinearFit fit = fit_penalized(inst.x, inst.y, spec, tight());
  const Eigen::VectorXd ols = inst.x.colPivHouseholderQr().solve(inst.y);
  const double at_fit = penalized_objective(inst.x, inst.y, spec, 0.0, fit.coefficients);
  const double at_ols = penalized_objective(inst.x, inst.y, spec, 0.0, ols);
  CHECK(at_fit <= at_ols + 1e-9);
}

TEST_CASE("adaptive weights follow the reciprocal rule") {
  // Orthonormal design scaled so the OLS pilot is exactly (1, 2).
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, -1, 0, 0, 1, 0, -1;
  Eigen::VectorXd beta(2);
  beta << 1.0, 2.0;
  const Eigen::VectorXd y = x * beta;

  const Eigen::VectorXd w1 = derive_adaptive_weights(x, y, 1.0);
  CHECK(w1[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(w1[1] == doctest::Approx(0.5).epsilon(1e-5));

  const Eigen::VectorXd w0 = derive_adaptive_weights(x, y, 0.0);
  CHECK(w0[0] == doctest::Approx(1.0));
  CHECK(w0[1] == doctest::Approx(1.0));

  // zero pilot coefficient: weight capped by the epsilon guard
  const Eigen::VectorXd y_first = x.col(0) * 3.0;
  const Eigen::VectorXd wz = derive_adaptive_weights(x, y_first, 1.0);
  CHECK(wz[1] == doctest::Approx(1e6).epsilon(1e-3));
}

TEST_CASE("gamma zero reduces the adaptive fit to plain lasso") {
  const Instance inst = random_instance(66, 30, 5);
  PenaltySpec plain;
  plain.alpha = 1.0;
  plain.lambda = 2.0;
  PenaltySpec adaptive = plain;
  adaptive.weights = derive_adaptive_weights(inst.x, inst.y, 0.0);
  adaptive.adapt_exponent = 0.0;
  const auto a = fit_penalized(inst.x, inst.y, plain, tight());
  const auto b = fit_penalized(inst.x, inst.y, adaptive, tight());
  CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("prediction is the affine map") {
  LinearFit fit;
  fit.intercept = 3.0;
  fit.coefficients = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd x(2);
  x << 5.0, -2.0;
  CHECK(predict_linear(fit, x) == doctest::Approx(3.0));

  fit.intercept = 0.0;
  fit.coefficients << 1.0, -1.0;
  x << 2.0, 0.5;
  CHECK(predict_linear(fit, x) == doctest::Approx(1.5));

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(predict_linear(fit, wrong), DimensionError);
}

TEST_CASE("non-finite inputs are rejected") {
  Eigen::MatrixXd x(2, 1);
  x << 1.0, std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  CHECK_THROWS_AS(fit_penalized(x, y, PenaltySpec{}), NumericInputError);
}

TEST_CASE("hitting the sweep cap is reported, not thrown") {
  const Instance inst = random_instance(77, 40, 10);
  PenaltySpec spec;
  spec.alpha = 0.0;
  spec.lambda = 0.001;
  FitOptions options;
  options.tol = 1e-16;
  options.max_sweeps = 2;
  const LinearFit fit = fit_penalized(inst.x, inst.y, spec, options);
  CHECK_FALSE(fit.converged);
  CHECK(fit.n_iterations == 2);
}

TEST_CASE("fits serialize to json and back") {
  const Instance inst = random_instance(88, 20, 3);
  PenaltySpec spec;
  spec.alpha = 1.0;
  spec.lambda = 1.5;
  spec.weights = derive_adaptive_weights(inst.x, inst.y, 1.0);
  const LinearFit fit = fit_penalized(inst.x, inst.y, spec);
  const LinearFit loaded = linear_fit_from_json(linear_fit_to_json(fit));
  CHECK(loaded.intercept == fit.intercept);
  CHECK((loaded.coefficients - fit.coefficients).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.spec.lambda == fit.spec.lambda);
  CHECK(loaded.converged == fit.converged);
  CHECK((loaded.spec.weights - fit.spec.weights).cwiseAbs().maxCoeff() == 0.0);
}

} // TEST_SUITE
