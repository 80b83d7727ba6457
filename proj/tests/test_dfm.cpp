#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "nowcast/dfm.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/synthetic.hpp"
#include "oracles.hpp"

using namespace nowcast;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

StateSpace scalar_model(double a, double q, double c, double r, double m0, double p0) {
  StateSpace model;
  model.r_factors = 1;
  model.p_lags = 1;
  model.n_series = 1;
  model.A = Eigen::MatrixXd::Constant(1, 1, a);
  model.Q = Eigen::MatrixXd::Constant(1, 1, q);
  model.C = Eigen::MatrixXd::Constant(1, 1, c);
  model.R = Eigen::VectorXd::Constant(1, r);
  model.init_mean = Eigen::VectorXd::Constant(1, m0);
  model.init_cov = Eigen::MatrixXd::Constant(1, 1, p0);
  return model;
}

StateSpace three_series_model() {
  StateSpace model;
  model.r_factors = 1;
  model.p_lags = 1;
  model.n_series = 3;
  model.A = Eigen::MatrixXd::Constant(1, 1, 0.7);
  model.Q = Eigen::MatrixXd::Constant(1, 1, 0.51);
  model.C = Eigen::MatrixXd(3, 1);
  model.C << 1.0, -0.6, 1.4;
  model.R = Eigen::VectorXd(3);
  model.R << 0.4, 0.9, 0.2;
  model.init_mean = Eigen::VectorXd::Zero(1);
  model.init_cov = Eigen::MatrixXd::Identity(1, 1);
  return model;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const double num = ((a.array() - ma) * (b.array() - mb)).sum();
  const double den = std::sqrt((a.array() - ma).square().sum() *
                               (b.array() - mb).square().sum());
  return num / den;
}

} // namespace

TEST_SUITE("dfm") {

TEST_CASE("scalar posterior update matches the Bayes rule") {
  const StateSpace model = scalar_model(0.0, 1.0, 1.0, 1.0, 0.0, 1.0);
  Eigen::MatrixXd data(1, 1);
  data << 2.0;
  const KalmanOutput out = kalman_filter_smoother(model, data);
  CHECK(out.filtered_mean(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.filtered_cov[0](0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::isfinite(out.log_likelihood));
}

TEST_CASE("fully missing time points fall back to prediction") {
  const StateSpace model = scalar_model(0.8, 0.36, 1.0, 0.25, 0.0, 1.0);
  Eigen::MatrixXd data(1, 3);
  data << 1.0, kNaN, 0.5;
  const KalmanOutput out = kalman_filter_smoother(model, data);
  CHECK(out.filtered_mean(0, 1) == out.predicted_mean(0, 1));
  CHECK(out.filtered_cov[1](0, 0) == out.predicted_cov[1](0, 0));
}

TEST_CASE("smoothed moments match brute-force joint-Gaussian conditioning") {
  SUBCASE("scalar, T=3, nonzero prior mean") {
    const StateSpace model = scalar_model(0.8, 0.5, 1.2, 0.3, 0.5, 2.0);
    Eigen::MatrixXd data(1, 3);
    data << 1.0, -0.5, 2.0;
    const KalmanOutput out = kalman_filter_smoother(model, data);
    const auto oracle = testutil::joint_gaussian_smoother(model, data);
    for (int t = 0; t < 3; ++t) {
      CHECK(out.smoothed_mean(0, t) == doctest::Approx(oracle.means(0, t)).epsilon(1e-8));
      CHECK(out.smoothed_cov[t](0, 0) ==
            doctest::Approx(oracle.covs[t](0, 0)).epsilon(1e-8));
    }
  }
  SUBCASE("three series, T=5, with missing entries") {
    const StateSpace model = three_series_model();
    Eigen::MatrixXd data(3, 5);
    data << 1.0, kNaN, 0.3, -0.2, 0.9,
            -0.5, 0.4, kNaN, kNaN, -1.1,
            1.6, 1.2, 0.8, 0.1, kNaN;
    const KalmanOutput out = kalman_filter_smoother(model, data);
    const auto oracle = testutil::joint_gaussian_smoother(model, data);
    for (int t = 0; t < 5; ++t) {
      CHECK(std::abs(out.smoothed_mean(0, t) - oracle.means(0, t)) < 1e-8);
      CHECK(std::abs(out.smoothed_cov[t](0, 0) - oracle.covs[t](0, 0)) < 1e-8);
    }
  }
}

TEST_CASE("deleting an observation equals excluding its measurement row") {
  const StateSpace model = three_series_model();
  Eigen::MatrixXd data(3, 4);
  data << 1.0, 0.2, 0.3, -0.2,
          -0.5, 0.4, 0.1, 0.6,
          1.6, 1.2, 0.8, 0.1;
  Eigen::MatrixXd deleted = data;
  deleted(1, 2) = kNaN;

  const KalmanOutput filtered = kalman_filter_smoother(model, deleted);
  const auto oracle = testutil::joint_gaussian_smoother(model, deleted);
  for (int t = 0; t < 4; ++t) {
    CHECK(std::abs(filtered.smoothed_mean(0, t) - oracle.means(0, t)) < 1e-10);
  }
}

TEST_CASE("fully observed data matches the dense textbook filter") {
  const StateSpace model = three_series_model();
  Rng rng(17);
  Eigen::MatrixXd data(3, 12);
  for (int t = 0; t < 12; ++t) {
    for (int i = 0; i < 3; ++i) data(i, t) = rng.normal();
  }
  const KalmanOutput out = kalman_filter_smoother(model, data);
  const Eigen::MatrixXd reference = testutil::dense_filter_means(model, data);
  CHECK((out.filtered_mean - reference).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("smoothing never widens the filtered posterior") {
  const StateSpace model = three_series_model();
  Rng rng(3);
  Eigen::MatrixXd data(3, 20);
  for (int t = 0; t < 20; ++t) {
    for (int i = 0; i < 3; ++i) data(i, t) = rng.bernoulli(0.2) ? kNaN : rng.normal();
  }
  const KalmanOutput out = kalman_filter_smoother(model, data);
  for (int t = 0; t < 20; ++t) {
    const Eigen::MatrixXd gap = out.filtered_cov[t] - out.smoothed_cov[t];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (gap + gap.transpose()));
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("log-likelihood is invariant under factor rotation") {
  // Two-factor system; rotating the factor basis must not move the fit.
  StateSpace model;
  model.r_factors = 2;
  model.p_lags = 1;
  model.n_series = 4;
  model.A = Eigen::MatrixXd::Zero(2, 2);
  model.A << 0.6, 0.1, -0.2, 0.4;
  model.Q = Eigen::MatrixXd::Zero(2, 2);
  model.Q << 0.5, 0.1, 0.1, 0.7;
  model.C = Eigen::MatrixXd(4, 2);
  model.C << 1.0, 0.2, -0.4, 1.1, 0.7, -0.3, 0.2, 0.9;
  model.R = Eigen::VectorXd::Constant(4, 0.3);
  model.init_mean = Eigen::VectorXd::Zero(2);
  model.init_cov = Eigen::MatrixXd::Identity(2, 2);

  Rng rng(7);
  Eigen::MatrixXd data(4, 15);
  for (int t = 0; t < 15; ++t) {
    for (int i = 0; i < 4; ++i) data(i, t) = rng.normal();
  }

  const double angle = 0.83;
  Eigen::MatrixXd g(2, 2);
  g << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);

  StateSpace rotated = model;
  rotated.C = model.C * g.transpose();
  rotated.A = g * model.A * g.transpose();
  rotated.Q = g * model.Q * g.transpose();
  rotated.init_mean = g * model.init_mean;
  rotated.init_cov = g * model.init_cov * g.transpose();

  const double base = kalman_filter_smoother(model, data).log_likelihood;
  const double turned = kalman_filter_smoother(rotated, data).log_likelihood;
  CHECK(base == doctest::Approx(turned).epsilon(1e-8));
}

TEST_CASE("em recovers an exact one-factor structure") {
  // Noiseless rank-1 panel: x_t = c * f_t.
  Rng rng(11);
  const int T = 80;
  Eigen::VectorXd factor(T);
  double f = rng.normal();
  for (int t = 0; t < T; ++t) {
    factor[t] = f;
    f = 0.8 * f + 0.6 * rng.normal();
  }
  Eigen::VectorXd loadings(4);
  loadings << 1.0, -0.5, 0.8, 1.3;
  Eigen::MatrixXd data = loadings * factor.transpose();

  const EmResult result = fit_dfm_em(data, 1, 1, {100, 1e-8});
  const Eigen::VectorXd smoothed = result.smoother.smoothed_mean.row(0).transpose();
  CHECK(std::abs(correlation(smoothed, factor)) > 0.9999);
}

TEST_CASE("em log-likelihood is monotone on synthetic two-factor data") {
  const SyntheticPanel synth = generate_synthetic_panel(13, 90, 8, 2, 0.0);
  const Eigen::MatrixXd data = synth.panel.design.transpose();
  const EmResult result = fit_dfm_em(data, 2, 1, {60, 1e-10});
  REQUIRE(result.loglik_path.size() >= 10);
  for (std::size_t i = 1; i < result.loglik_path.size(); ++i) {
    CHECK(result.loglik_path[i] >= result.loglik_path[i - 1] - 1e-8);
  }
}

TEST_CASE("em handles missing entries and higher lag order") {
  SyntheticPanel synth = generate_synthetic_panel(14, 70, 6, 1, 0.0);
  Eigen::MatrixXd data = synth.panel.design.transpose();
  Rng rng(2);
  for (int i = 0; i < data.rows(); ++i) {
    for (int t = 0; t < data.cols(); ++t) {
      if (rng.bernoulli(0.15)) data(i, t) = kNaN;
    }
  }
  const EmResult result = fit_dfm_em(data, 1, 2, {40, 1e-8});
  for (std::size_t i = 1; i < result.loglik_path.size(); ++i) {
    CHECK(result.loglik_path[i] >= result.loglik_path[i - 1] - 1e-8);
  }
  CHECK(result.model.state_dim() == 2);
}

TEST_CASE("em validates its configuration") {
  Eigen::MatrixXd tiny(2, 3);
  tiny.setZero();
  CHECK_THROWS_AS(fit_dfm_em(tiny, 3, 2, {}), ConfigError);
}

TEST_CASE("nowcast reproduces a noiselessly duplicated predictor") {
  // Series 0 is observed everywhere; the target row duplicates it but the
  // last month is missing.
  Rng rng(19);
  const int T = 60;
  Eigen::VectorXd x(T);
  double f = 0.0;
  for (int t = 0; t < T; ++t) {
    f = 0.75 * f + 0.66 * rng.normal();
    x[t] = f;
  }
  Eigen::MatrixXd data(2, T);
  data.row(0) = x.transpose();
  data.row(1) = x.transpose();
  data(1, T - 1) = kNaN;

  const EmResult em = fit_dfm_em(data, 1, 1, {200, 1e-10});
  const double nowcast = dfm_nowcast(em.model, data, 1, ColumnStats{0.0, 1.0});
  CHECK(nowcast == doctest::Approx(x[T - 1]).epsilon(1e-4));
}

TEST_CASE("nowcast is the de-standardized smoothed fitted value") {
  const StateSpace model = scalar_model(0.7, 0.51, 1.0, 0.4, 0.0, 1.0);
  Eigen::MatrixXd data(1, 4);
  data << 0.5, -0.1, 0.8, kNaN;

  StateSpace two = model;
  two.n_series = 2;
  two.C = Eigen::MatrixXd(2, 1);
  two.C << 1.0, 0.9;
  two.R = Eigen::VectorXd(2);
  two.R << 0.4, 0.2;
  Eigen::MatrixXd both(2, 4);
  both.row(0) = data.row(0);
  both.row(1) << 0.4, -0.2, 0.7, kNaN;

  const KalmanOutput ks = kalman_filter_smoother(two, both);
  const double expected = 3.0 + 2.0 * (0.9 * ks.smoothed_mean(0, 3));
  CHECK(dfm_nowcast(two, both, 1, ColumnStats{3.0, 2.0}) == doctest::Approx(expected));
}

TEST_CASE("nowcast requires some target history") {
  const StateSpace model = three_series_model();
  Eigen::MatrixXd data(3, 4);
  data.setConstant(0.5);
  data.row(2).setConstant(kNaN);
  CHECK_THROWS_AS(dfm_nowcast(model, data, 2, ColumnStats{0.0, 1.0}), TargetMissingError);
}

TEST_CASE("state space invariants are enforced") {
  StateSpace model = scalar_model(1.2, 1.0, 1.0, 1.0, 0.0, 1.0); // explosive
  CHECK_THROWS_AS(model.validate(), ConfigError);
  model = scalar_model(0.5, 1.0, 1.0, 1e-12, 0.0, 1.0); // below the R floor
  CHECK_THROWS_AS(model.validate(), ConfigError);
  model = three_series_model();
  CHECK_NOTHROW(model.validate());
}

TEST_CASE("state space serializes to json and back") {
  const StateSpace model = three_series_model();
  const StateSpace loaded = state_space_from_json(state_space_to_json(model));
  CHECK((loaded.C - model.C).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.A - model.A).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.Q - model.Q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.R - model.R).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.n_series == 3);
}

} // TEST_SUITE
