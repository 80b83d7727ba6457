#include "nowcast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_aligned(const ForecastTrack& a, const ForecastTrack& b) {
  if (a.months != b.months) {
    throw AlignmentError("tracks '" + a.model_id + "' and '" + b.model_id +
                         "' cover different months");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace

ForecastTrack expanding_window_forecast(const std::string& family, const HyperParams& hyper,
                                        const MonthlyPanel& panel, Month test_first,
                                        Month test_last, const ForecastOptions& options) {
  const int first = panel.index_of(test_first);
  const int last = panel.index_of(test_last);
  if (first < 0 || last < 0 || last < first) {
    throw ConfigError("forecast: test range not inside the panel");
  }
  if (first < 3) throw ConfigError("forecast: too little history before the test range");

  ForecastTrack track;
  track.model_id = family;

  std::unique_ptr<FittedModel> frozen;
  if (!options.refit_each_month) {
    std::vector<int> rows(first);
    std::iota(rows.begin(), rows.end(), 0);
    frozen = fit_model(family, panel, rows, hyper, options.ctx);
  }

  for (int t = first; t <= last; ++t) {
    track.months.push_back(panel.months[t]);
    track.actuals.push_back(panel.target[t]);
    try {
      const FittedModel* model = frozen.get();
      std::unique_ptr<FittedModel> refit;
      if (options.refit_each_month) {
        std::vector<int> rows(t);
        std::iota(rows.begin(), rows.end(), 0);
        refit = fit_model(family, panel, rows, hyper, options.ctx);
        model = refit.get();
      }
      track.predictions.push_back(model->predict_row(panel, t));
      track.diagnostics.emplace_back();
    } catch (const std::exception& e) {
      track.predictions.push_back(kNaN);
      track.diagnostics.push_back(panel.months[t].to_string() + ": " + e.what());
    }
  }
  return track;
}

RmseResult rmse_report(const ForecastTrack& track, const ForecastTrack& baseline) {
  require_aligned(track, baseline);
  double ss_track = 0.0, ss_base = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < track.months.size(); ++i) {
    const double e_track = track.predictions[i] - track.actuals[i];
    const double e_base = baseline.predictions[i] - baseline.actuals[i];
    if (!std::isfinite(e_track) || !std::isfinite(e_base)) continue;
    ss_track += e_track * e_track;
    ss_base += e_base * e_base;
    ++n;
  }
  if (n == 0) throw AlignmentError("rmse: no complete months shared by the tracks");
  RmseResult out;
  out.rmse = std::sqrt(ss_track / n);
  const double base_rmse = std::sqrt(ss_base / n);
  if (!(base_rmse > 0.0)) throw DegenerateBaselineError("rmse: baseline RMSE is zero");
  out.relative = out.rmse / base_rmse;
  out.n_months = n;
  return out;
}

DmResult dm_test(const ForecastTrack& track_a, const ForecastTrack& track_b, int horizon,
                 bool small_sample_adjust, bool two_sided) {
  require_aligned(track_a, track_b);
  if (horizon < 1) throw ConfigError("dm: horizon must be >= 1");

  std::vector<double> d;
  for (std::size_t i = 0; i < track_a.months.size(); ++i) {
    const double ea = track_a.predictions[i] - track_a.actuals[i];
    const double eb = track_b.predictions[i] - track_b.actuals[i];
    if (!std::isfinite(ea) || !std::isfinite(eb)) continue;
    d.push_back(ea * ea - eb * eb);
  }
  const int t_len = static_cast<int>(d.size());
  if (t_len < 5) throw DimensionError("dm: need at least 5 complete months");

  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / t_len;

  // Bartlett long-run variance with horizon-1 lags.
  auto autocov = [&](int lag) {
    double acc = 0.0;
    for (int t = lag; t < t_len; ++t) acc += (d[t] - mean) * (d[t - lag] - mean);
    return acc / t_len;
  };
  double lrv = autocov(0);
  for (int lag = 1; lag < horizon; ++lag) {
    lrv += 2.0 * (1.0 - static_cast<double>(lag) / horizon) * autocov(lag);
  }
  if (!(lrv > 1e-300)) {
    throw DegenerateDifferentialError("dm: loss differential has zero variance");
  }

  double statistic = mean / std::sqrt(lrv / t_len);
  double p_value;
  if (small_sample_adjust) {
    const double h = horizon;
    const double factor =
        std::sqrt((t_len + 1.0 - 2.0 * h + h * (h - 1.0) / t_len) / t_len);
    statistic *= factor;
    const boost::math::students_t dist(t_len - 1);
    p_value = two_sided ? 2.0 * boost::math::cdf(dist, -std::abs(statistic))
                        : boost::math::cdf(boost::math::complement(dist, statistic));
  } else {
    const boost::math::normal dist;
    p_value = two_sided ? 2.0 * boost::math::cdf(dist, -std::abs(statistic))
                        : boost::math::cdf(boost::math::complement(dist, statistic));
  }
  return {statistic, p_value};
}

ForecastTrack combine_mean(const std::vector<ForecastTrack>& tracks) {
  if (tracks.empty()) throw ConfigError("combine: no tracks");
  for (const auto& track : tracks) require_aligned(tracks.front(), track);

  ForecastTrack out;
  out.model_id = "combination";
  out.months = tracks.front().months;
  out.actuals = tracks.front().actuals;
  out.diagnostics.assign(out.months.size(), "");
  for (std::size_t i = 0; i < out.months.size(); ++i) {
    double sum = 0.0;
    int n = 0;
    for (const auto& track : tracks) {
      if (std::isfinite(track.predictions[i])) {
        sum += track.predictions[i];
        ++n;
      }
    }
    out.predictions.push_back(n > 0 ? sum / n : kNaN);
  }
  return out;
}

ConsistencyResult consistency_regression(const std::vector<double>& actuals,
                                         const ForecastTrack& benchmark,
                                         const ForecastTrack& ml) {
  require_aligned(benchmark, ml);
  if (actuals.size() != benchmark.months.size()) {
    throw AlignmentError("consistency: actuals length mismatch");
  }

  std::vector<double> y, x1, x2;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    if (!std::isfinite(actuals[i]) || !std::isfinite(benchmark.predictions[i]) ||
        !std::isfinite(ml.predictions[i])) {
      continue;
    }
    y.push_back(actuals[i]);
    x1.push_back(benchmark.predictions[i]);
    x2.push_back(ml.predictions[i]);
  }
  const int n = static_cast<int>(y.size());
  if (n < 5) throw DimensionError("consistency: need at least 5 complete months");

  // Collinearity of the two regressors.
  {
    const double m1 = std::accumulate(x1.begin(), x1.end(), 0.0) / n;
    const double m2 = std::accumulate(x2.begin(), x2.end(), 0.0) / n;
    double s11 = 0.0, s22 = 0.0, s12 = 0.0;
    for (int i = 0; i < n; ++i) {
      s11 += (x1[i] - m1) * (x1[i] - m1);
      s22 += (x2[i] - m2) * (x2[i] - m2);
      s12 += (x1[i] - m1) * (x2[i] - m2);
    }
    if (s11 > 0.0 && s22 > 0.0) {
      const double corr = s12 / std::sqrt(s11 * s22);
      if (std::abs(corr) > 1.0 - 1e-10) {
        throw CollinearityError("consistency: regressors are collinear");
      }
    } else {
      throw CollinearityError("consistency: a regressor is constant");
    }
  }

  // OLS without intercept on (benchmark, ml).
  double a11 = 0.0, a12 = 0.0, a22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (int i = 0; i < n; ++i) {
    a11 += x1[i] * x1[i];
    a12 += x1[i] * x2[i];
    a22 += x2[i] * x2[i];
    b1 += x1[i] * y[i];
    b2 += x2[i] * y[i];
  }
  const double det = a11 * a22 - a12 * a12;
  if (!(std::abs(det) > 1e-12 * a11 * a22)) {
    throw CollinearityError("consistency: singular normal equations");
  }

  ConsistencyResult result;
  result.beta1 = (a22 * b1 - a12 * b2) / det;
  result.beta2 = (a11 * b2 - a12 * b1) / det;

  double rss = 0.0;
  std::vector<double> fitted(n);
  for (int i = 0; i < n; ++i) {
    fitted[i] = result.beta1 * x1[i] + result.beta2 * x2[i];
    const double e = y[i] - fitted[i];
    rss += e * e;
  }
  result.aic = n * std::log(rss / n) + 2.0 * 2.0;

  // Homoskedastic t test on beta2: Var(beta2) = sigma^2 * (X'X)^{-1}_{22}.
  const double sigma2 = rss / (n - 2);
  const double var_beta2 = sigma2 * a11 / det;
  const double t_stat = result.beta2 / std::sqrt(var_beta2);
  const boost::math::students_t dist(n - 2);
  result.p_value_beta2 = 2.0 * boost::math::cdf(dist, -std::abs(t_stat));

  // Benchmark-only model for the accuracy comparison.
  const double gamma = b1 / a11;
  ForecastTrack bench_only, full_model;
  bench_only.model_id = "benchmark_only";
  full_model.model_id = "with_ml";
  for (int i = 0; i < n; ++i) {
    const Month m(i);
    bench_only.months.push_back(m);
    full_model.months.push_back(m);
    bench_only.actuals.push_back(y[i]);
    full_model.actuals.push_back(y[i]);
    bench_only.predictions.push_back(gamma * x1[i]);
    full_model.predictions.push_back(fitted[i]);
  }
  result.dm_p_value =
      dm_test(bench_only, full_model, 1, /*small_sample_adjust=*/true, /*two_sided=*/false)
          .p_value;
  return result;
}

void write_track_csv(const ForecastTrack& track, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "month,actual,prediction\n";
  for (std::size_t i = 0; i < track.months.size(); ++i) {
    out << track.months[i].to_string() << ",";
    if (std::isfinite(track.actuals[i])) out << format_double(track.actuals[i]);
    out << ",";
    if (std::isfinite(track.predictions[i])) out << format_double(track.predictions[i]);
    out << "\n";
  }
}

ForecastTrack read_track_csv(const std::string& path, const std::string& model_id) {
  std::ifstream in(path);
  if (!in) throw InputFormatError("cannot open '" + path + "'");
  ForecastTrack track;
  track.model_id = model_id;
  std::string line;
  std::getline(in, line); // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string month, actual, prediction;
    std::getline(ss, month, ',');
    std::getline(ss, actual, ',');
    std::getline(ss, prediction, ',');
    track.months.push_back(Month::parse(month));
    track.actuals.push_back(actual.empty() ? kNaN : std::stod(actual));
    track.predictions.push_back(prediction.empty() ? kNaN : std::stod(prediction));
    track.diagnostics.emplace_back();
  }
  return track;
}

} // namespace nowcast
