#pragma once

#include <string>
#include <vector>

#include "nowcast/calendar.hpp"
#include "nowcast/models.hpp"

namespace nowcast {

// One model's out-of-sample monthly nowcasts paired with realized values.
// A NaN prediction marks a month whose fit failed (see diagnostics).
struct ForecastTrack {
  std::string model_id;
  std::vector<Month> months;
  std::vector<double> predictions;
  std::vector<double> actuals; // percent YoY
  std::vector<std::string> diagnostics;
};

struct ForecastOptions {
  bool refit_each_month = true;
  ModelContext ctx;
};

// For each test month t: fit on all panel months before t, predict t from its
// (ragged-edge) design row. With refit_each_month=false the parameters are
// estimated once on the months before the first test month.
ForecastTrack expanding_window_forecast(const std::string& family, const HyperParams& hyper,
                                        const MonthlyPanel& panel, Month test_first,
                                        Month test_last, const ForecastOptions& options = {});

struct RmseResult {
  double rmse = 0.0;
  double relative = 0.0; // RMSE(track) / RMSE(baseline)
  int n_months = 0;      // complete prediction/actual pairs used
};

// RMSE and the ratio against a baseline track over the months where both
// tracks have finite predictions and actuals.
RmseResult rmse_report(const ForecastTrack& track, const ForecastTrack& baseline);

struct DmResult {
  double statistic = 0.0;
  double p_value = 0.0;
};

// Diebold-Mariano test on squared-error loss differentials
// d_t = e_a(t)^2 - e_b(t)^2. The long-run variance uses a Bartlett kernel
// with horizon-1 lags (plain variance at horizon 1). With
// small_sample_adjust the statistic is scaled by the Harvey-Leybourne-
// Newbold factor and referred to Student-t(T-1), otherwise to the standard
// normal. One-sided alternative: track_b is more accurate.
DmResult dm_test(const ForecastTrack& track_a, const ForecastTrack& track_b, int horizon = 1,
                 bool small_sample_adjust = true, bool two_sided = true);

// Per-month arithmetic mean of the tracks' predictions, id "combination".
ForecastTrack combine_mean(const std::vector<ForecastTrack>& tracks);

struct ConsistencyResult {
  double beta1 = 0.0;      // weight on the factor-model benchmark
  double beta2 = 0.0;      // weight on the ML track
  double aic = 0.0;        // T*ln(RSS/T) + 2k with k = 2
  double p_value_beta2 = 0.0;
  double dm_p_value = 0.0; // one-sided Harvey-adjusted, vs the benchmark-only model
};

// OLS without intercept of the actuals on (benchmark, ml) predictions,
// mirroring the encompassing regression; the final column compares the
// two-regressor residuals against the benchmark-only residuals.
ConsistencyResult consistency_regression(const std::vector<double>& actuals,
                                         const ForecastTrack& benchmark,
                                         const ForecastTrack& ml);

void write_track_csv(const ForecastTrack& track, const std::string& path);
ForecastTrack read_track_csv(const std::string& path, const std::string& model_id);

} // namespace nowcast
