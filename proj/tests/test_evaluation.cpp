#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/evaluation.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/synthetic.hpp"

using namespace nowcast;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ForecastTrack track_from_errors(const std::string& id, const std::vector<double>& errors) {
  ForecastTrack track;
  track.model_id = id;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    track.months.push_back(Month(2015, 1).plus(static_cast<int>(i)));
    track.actuals.push_back(2.0);
    track.predictions.push_back(2.0 + errors[i]);
    track.diagnostics.emplace_back();
  }
  return track;
}

MonthlyPanel ar_panel(const std::vector<double>& target, int n_test) {
  MonthlyPanel panel;
  const Month start(2012, 1);
  const int n = static_cast<int>(target.size());
  panel.design.resize(n, 1);
  panel.target.resize(n);
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    panel.months.push_back(start.plus(i));
    panel.design(i, 0) = rng.normal();
    panel.target[i] = target[i];
  }
  panel.missing_mask.assign(n, 0);
  panel.column_ids = {"a"};
  panel.column_categories = {Category::structured};
  panel.column_stats = {{0.0, 1.0}};
  panel.target_stats = {0.0, 1.0};
  panel.train_end = start.plus(n - n_test - 1);
  panel.test_end = start.plus(n - 1);
  panel.validate();
  return panel;
}

// Closed-form OLS of y_t on (1, y_{t-1}) over indices [0, fit_end].
std::pair<double, double> hand_ar1(const std::vector<double>& y, int fit_end) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int t = 1; t <= fit_end; ++t) {
    sx += y[t - 1];
    sy += y[t];
    sxx += y[t - 1] * y[t - 1];
    sxy += y[t - 1] * y[t];
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / n;
  return {intercept, slope};
}

} // namespace

TEST_SUITE("evaluation") {

TEST_CASE("the published test span yields 105 forecasts") {
  CHECK(month_span(Month(2014, 9), Month(2023, 5)) == 105);
  const SyntheticPanel synth = generate_synthetic_panel(2, 185, 12, 2, 0.2);
  const ForecastTrack track = expanding_window_forecast(
      "ar", HyperParams{}, synth.panel, Month(2014, 9), Month(2023, 5));
  CHECK(track.months.size() == 105);
  for (double p : track.predictions) CHECK(std::isfinite(p));
}

TEST_CASE("a one-month test range yields a single forecast") {
  const SyntheticPanel synth = generate_synthetic_panel(3, 60, 6, 1, 0.0);
  const ForecastTrack track =
      expanding_window_forecast("ar", HyperParams{}, synth.panel,
                                synth.panel.test_end, synth.panel.test_end);
  CHECK(track.months.size() == 1);
}

TEST_CASE("ar refits match a hand-computed chain") {
  std::vector<double> y;
  Rng rng(8);
  double value = 1.0;
  for (int i = 0; i < 20; ++i) {
    value = 0.4 + 0.6 * value + 0.3 * rng.normal();
    y.push_back(value);
  }
  const MonthlyPanel panel = ar_panel(y, 3);
  const ForecastTrack track =
      expanding_window_forecast("ar", HyperParams{}, panel,
                                panel.train_end.plus(1), panel.test_end);
  REQUIRE(track.months.size() == 3);
  for (int k = 0; k < 3; ++k) {
    const int t = 17 + k; // forecast index in the target vector
    const auto [intercept, slope] = hand_ar1(y, t - 1);
    CHECK(track.predictions[k] == doctest::Approx(intercept + slope * y[t - 1]).epsilon(1e-10));
  }
}

TEST_CASE("fit failures become missing predictions with diagnostics") {
  const MonthlyPanel panel = ar_panel(std::vector<double>(12, 3.3), 2);
  const ForecastTrack track = expanding_window_forecast(
      "ar", HyperParams{}, panel, panel.train_end.plus(1), panel.test_end);
  REQUIRE(track.months.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::isnan(track.predictions[i]));
    CHECK(track.diagnostics[i].find("constant") != std::string::npos);
  }
}

TEST_CASE("rmse follows its definition") {
  const ForecastTrack unit = track_from_errors("m", {1, 1, 1, 1});
  const ForecastTrack base = track_from_errors("ar", {2, -2, 2, -2});
  const RmseResult r = rmse_report(unit, base);
  CHECK(r.rmse == doctest::Approx(1.0));
  CHECK(r.relative == doctest::Approx(0.5));

  const ForecastTrack two = track_from_errors("m", {3, -4});
  const ForecastTrack two_base = track_from_errors("ar", {1, -1});
  CHECK(rmse_report(two, two_base).rmse == doctest::Approx(std::sqrt(12.5)));
}

TEST_CASE("published rmse column reproduces its printed ratio") {
  const ForecastTrack model = track_from_errors("lasso", std::vector<double>(8, 0.26));
  const ForecastTrack ar = track_from_errors("ar", std::vector<double>(8, 2.55));
  const RmseResult r = rmse_report(model, ar);
  CHECK(std::abs(r.relative - 0.10) < 0.005);
}

TEST_CASE("rmse of a track against itself is exactly one") {
  const ForecastTrack track = track_from_errors("m", {0.5, -1.5, 2.5});
  CHECK(rmse_report(track, track).relative == 1.0);
}

TEST_CASE("rmse ignores pair order") {
  std::vector<double> errors = {0.3, -1.1, 2.0, 0.7, -0.2};
  ForecastTrack a = track_from_errors("m", errors);
  std::reverse(errors.begin(), errors.end());
  ForecastTrack b = track_from_errors("m", errors);
  b.months = a.months; // same months, permuted errors
  const ForecastTrack base = track_from_errors("ar", {1, 1, 1, 1, 1});
  CHECK(rmse_report(a, base).rmse == doctest::Approx(rmse_report(b, base).rmse));
}

TEST_CASE("degenerate baselines and misalignment are rejected") {
  const ForecastTrack track = track_from_errors("m", {1, 1, 1, 1, 1});
  const ForecastTrack zero = track_from_errors("ar", {0, 0, 0, 0, 0});
  CHECK_THROWS_AS(rmse_report(track, zero), DegenerateBaselineError);

  ForecastTrack shifted = track;
  shifted.months[2] = Month(1999, 1);
  CHECK_THROWS_AS(rmse_report(track, shifted), AlignmentError);
}

TEST_CASE("identical tracks have no testable loss differential") {
  const ForecastTrack track = track_from_errors("m", {1, -1, 2, -2, 1, 1});
  CHECK_THROWS_AS(dm_test(track, track), DegenerateDifferentialError);
}

TEST_CASE("fixed differential reproduces the hand statistic") {
  const std::vector<double> d = {1, 2, 3, 2, 1, 0, 1, 2, 3, 2};
  std::vector<double> err_a;
  for (double v : d) err_a.push_back(std::sqrt(v)); // e_a^2 - e_b^2 = d with e_b = 0
  const ForecastTrack a = track_from_errors("a", err_a);
  const ForecastTrack b = track_from_errors("b", std::vector<double>(d.size(), 0.0));
  const DmResult result = dm_test(a, b, 1, /*small_sample_adjust=*/true, /*two_sided=*/true);
  // mean 1.7, variance arithmetic collapses to 17/3 after the small-sample factor
  CHECK(result.statistic == doctest::Approx(17.0 / 3.0).epsilon(1e-12));
  CHECK(result.p_value < 0.001);
}

TEST_CASE("the statistic is antisymmetric in its arguments") {
  Rng rng(12);
  std::vector<double> ea, eb;
  for (int i = 0; i < 24; ++i) {
    ea.push_back(rng.normal());
    eb.push_back(1.3 * rng.normal());
  }
  const ForecastTrack a = track_from_errors("a", ea);
  const ForecastTrack b = track_from_errors("b", eb);
  const DmResult ab = dm_test(a, b);
  const DmResult ba = dm_test(b, a);
  CHECK(ab.statistic == doctest::Approx(-ba.statistic).epsilon(1e-12));
  CHECK(ab.p_value == doctest::Approx(ba.p_value).epsilon(1e-12));
}

TEST_CASE("combination averages aligned predictions") {
  ForecastTrack a = track_from_errors("a", {0, 0});
  a.predictions = {1.0, 3.0};
  ForecastTrack b = a;
  b.model_id = "b";
  b.predictions = {3.0, 5.0};
  const ForecastTrack combo = combine_mean({a, b});
  CHECK(combo.model_id == "combination");
  CHECK(combo.predictions[0] == doctest::Approx(2.0));
  CHECK(combo.predictions[1] == doctest::Approx(4.0));

  const ForecastTrack self = combine_mean({a});
  CHECK(self.predictions == a.predictions);

  CHECK_THROWS_AS(combine_mean({}), ConfigError);
}

TEST_CASE("combining six tracks never exceeds the worst individual error") {
  Rng rng(31);
  const std::vector<double> truth = {1.2, -0.4, 2.2, 0.1, -1.3, 0.8, 1.9, -0.6};
  std::vector<ForecastTrack> tracks;
  for (int m = 0; m < 6; ++m) {
    ForecastTrack track;
    track.model_id = "m" + std::to_string(m);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      track.months.push_back(Month(2015, 1).plus(static_cast<int>(i)));
      track.actuals.push_back(truth[i]);
      track.predictions.push_back(truth[i] + (0.3 + 0.2 * m) * rng.normal());
      track.diagnostics.emplace_back();
    }
    tracks.push_back(std::move(track));
  }
  const ForecastTrack combo = combine_mean(tracks);
  const ForecastTrack perfect = track_from_errors("truth", std::vector<double>(8, 1.0));

  auto rmse_of = [&](const ForecastTrack& t) {
    double ss = 0.0;
    for (std::size_t i = 0; i < t.months.size(); ++i) {
      const double e = t.predictions[i] - t.actuals[i];
      ss += e * e;
    }
    return std::sqrt(ss / t.months.size());
  };
  double worst = 0.0;
  for (const auto& t : tracks) worst = std::max(worst, rmse_of(t));
  CHECK(rmse_of(combo) <= worst + 1e-12);
}

TEST_CASE("a perfect ml track absorbs the consistency regression") {
  Rng rng(17);
  const int n = 40;
  std::vector<double> y;
  ForecastTrack bench, ml;
  for (int i = 0; i < n; ++i) {
    const double truth = 2.0 + rng.normal();
    y.push_back(truth);
    bench.months.push_back(Month(2015, 1).plus(i));
    ml.months.push_back(Month(2015, 1).plus(i));
    bench.actuals.push_back(truth);
    ml.actuals.push_back(truth);
    bench.predictions.push_back(rng.normal()); // independent noise
    ml.predictions.push_back(truth);           // exact
    bench.diagnostics.emplace_back();
    ml.diagnostics.emplace_back();
  }
  const ConsistencyResult r = consistency_regression(y, bench, ml);
  CHECK(std::abs(r.beta2 - 1.0) < 1e-6);
  CHECK(std::abs(r.beta1) < 1e-6);
  CHECK(r.p_value_beta2 < 1e-10);
}

TEST_CASE("five-point regression matches independent linear algebra") {
  const std::vector<double> y = {1.0, 2.0, 1.5, 3.0, 2.5};
  const std::vector<double> x1 = {0.8, 1.6, 1.2, 2.9, 2.2};
  const std::vector<double> x2 = {1.2, 2.2, 1.9, 2.6, 2.9};
  ForecastTrack bench, ml;
  for (int i = 0; i < 5; ++i) {
    bench.months.push_back(Month(2015, 1).plus(i));
    ml.months.push_back(Month(2015, 1).plus(i));
    bench.actuals.push_back(y[i]);
    ml.actuals.push_back(y[i]);
    bench.predictions.push_back(x1[i]);
    ml.predictions.push_back(x2[i]);
  }
  const ConsistencyResult r = consistency_regression(y, bench, ml);

  // independent route: QR solve of the 5x2 system
  Eigen::MatrixXd design(5, 2);
  Eigen::VectorXd target(5);
  for (int i = 0; i < 5; ++i) {
    design(i, 0) = x1[i];
    design(i, 1) = x2[i];
    target[i] = y[i];
  }
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
  CHECK(r.beta1 == doctest::Approx(beta[0]).epsilon(1e-8));
  CHECK(r.beta2 == doctest::Approx(beta[1]).epsilon(1e-8));
  const double rss = (target - design * beta).squaredNorm();
  CHECK(r.aic == doctest::Approx(5.0 * std::log(rss / 5.0) + 4.0).epsilon(1e-8));
}

TEST_CASE("collinear regressors are rejected") {
  ForecastTrack bench, ml;
  Rng rng(9);
  std::vector<double> y;
  for (int i = 0; i < 10; ++i) {
    const double v = rng.normal();
    y.push_back(v + 0.1);
    bench.months.push_back(Month(2015, 1).plus(i));
    ml.months.push_back(Month(2015, 1).plus(i));
    bench.actuals.push_back(y[i]);
    ml.actuals.push_back(y[i]);
    bench.predictions.push_back(v);
    ml.predictions.push_back(v); // identical to the benchmark
  }
  CHECK_THROWS_AS(consistency_regression(y, bench, ml), CollinearityError);
}

TEST_CASE("tracks round-trip through csv") {
  testutil::TempDir dir;
  ForecastTrack track = track_from_errors("m", {0.4, -0.6, 1.2});
  track.predictions[1] = kNaN;
  write_track_csv(track, dir.file("track.csv"));
  const ForecastTrack loaded = read_track_csv(dir.file("track.csv"), "m");
  REQUIRE(loaded.months.size() == 3);
  CHECK(loaded.months == track.months);
  CHECK(loaded.predictions[0] == track.predictions[0]);
  CHECK(std::isnan(loaded.predictions[1]));
  CHECK(loaded.actuals[2] == track.actuals[2]);
}

} // TEST_SUITE
