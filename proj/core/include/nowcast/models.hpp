#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nowcast/panel.hpp"

namespace nowcast {

using HyperParams = std::map<std::string, double>;

double hyper_get(const HyperParams& params, const std::string& name, double fallback);

// Settings for the state-space families; not tuned, carried by context.
struct DfmSettings {
  std::vector<std::string> columns; // predictor subset; empty = all columns
  int r_factors = 1;
  int p_lags = 1;
  int em_max_iter = 50;
  double em_tol = 1e-6;
};

struct ModelContext {
  std::uint64_t seed = 0;
  DfmSettings dfm;
};

// Estimation result able to score single panel rows. For the regression
// families the prediction uses only that row's predictors; for "dfm" the
// prediction filters the panel up to the requested row with the parameters
// frozen at fit time, so no information after the row leaks in.
class FittedModel {
public:
  virtual ~FittedModel() = default;
  virtual double predict_row(const MonthlyPanel& panel, int row) const = 0;
};

// Family ids: ar, ridge, lasso, elastic_net, adaptive_lasso, random_forest,
// gbm, dfm.
const std::vector<std::string>& supported_families();
bool is_dfm_family(const std::string& family);

// Fits `family` using the target values of `fit_rows`. The regression
// families read predictors row-wise; the dfm family models the contiguous
// span [0, max(fit_rows)] with the target masked outside fit_rows and the
// predictor missingness mask applied.
std::unique_ptr<FittedModel> fit_model(const std::string& family, const MonthlyPanel& panel,
                                       const std::vector<int>& fit_rows,
                                       const HyperParams& hyper, const ModelContext& ctx = {});

} // namespace nowcast
