#include "nowcast/models.hpp"

#include <algorithm>
#include <cmath>

#include "nowcast/dfm.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/linear.hpp"
#include "nowcast/tree.hpp"

namespace nowcast {

double hyper_get(const HyperParams& params, const std::string& name, double fallback) {
  const auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

const std::vector<std::string>& supported_families() {
  static const std::vector<std::string> families = {
      "ar",  "ridge", "lasso", "elastic_net", "adaptive_lasso", "random_forest",
      "gbm", "dfm"};
  return families;
}

bool is_dfm_family(const std::string& family) { return family == "dfm"; }

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<int>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd entries_of(const Eigen::VectorXd& v, const std::vector<int>& rows) {
  Eigen::VectorXd out(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<int>(i)] = v[rows[i]];
  return out;
}

class ArFitted : public FittedModel {
public:
  ArFitted(const MonthlyPanel& panel, const std::vector<int>& fit_rows) {
    // Pairs (y_{t-1}, y_t) over consecutive fit rows.
    std::vector<double> lag, cur;
    for (std::size_t i = 1; i < fit_rows.size(); ++i) {
      if (fit_rows[i] == fit_rows[i - 1] + 1) {
        lag.push_back(panel.target[fit_rows[i - 1]]);
        cur.push_back(panel.target[fit_rows[i]]);
      }
    }
    if (lag.size() < 2) throw DimensionError("ar: too few consecutive observations");
    const int n = static_cast<int>(lag.size());
    const Eigen::Map<Eigen::VectorXd> x(lag.data(), n);
    const Eigen::Map<Eigen::VectorXd> y(cur.data(), n);
    const double mx = x.mean(), my = y.mean();
    const double sxx = (x.array() - mx).square().sum();
    if (!(sxx > 1e-12 * n)) throw DegenerateRegressorError("ar: constant lagged regressor");
    slope_ = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
    intercept_ = my - slope_ * mx;
    mean_ = my;
  }

  double predict_row(const MonthlyPanel& panel, int row) const override {
    if (row <= 0 || std::isnan(panel.target[row - 1])) return mean_;
    return intercept_ + slope_ * panel.target[row - 1];
  }

private:
  double intercept_ = 0.0, slope_ = 0.0, mean_ = 0.0;
};

class LinearFitted : public FittedModel {
public:
  LinearFitted(const std::string& family, const MonthlyPanel& panel,
               const std::vector<int>& fit_rows, const HyperParams& hyper) {
    const Eigen::MatrixXd x_all = panel.filled_design();
    const Eigen::MatrixXd x = rows_of(x_all, fit_rows);
    const Eigen::VectorXd y = entries_of(panel.target, fit_rows);

    PenaltySpec spec;
    spec.lambda = hyper_get(hyper, "lambda", 0.0);
    if (family == "ridge") {
      spec.alpha = 0.0;
    } else if (family == "lasso") {
      spec.alpha = 1.0;
    } else if (family == "elastic_net") {
      spec.alpha = hyper_get(hyper, "alpha", 0.5);
    } else if (family == "adaptive_lasso") {
      spec.alpha = 1.0;
      spec.adapt_exponent = hyper_get(hyper, "gamma", 1.0);
      spec.weights = derive_adaptive_weights(x, y, spec.adapt_exponent);
    } else {
      throw ConfigError("unknown linear family '" + family + "'");
    }
    fit_ = fit_penalized(x, y, spec);
  }

  double predict_row(const MonthlyPanel& panel, int row) const override {
    Eigen::VectorXd x = panel.design.row(row);
    for (int j = 0; j < x.size(); ++j) {
      if (std::isnan(x[j])) x[j] = 0.0;
    }
    return predict_linear(fit_, x);
  }

private:
  LinearFit fit_;
};

class ForestFitted : public FittedModel {
public:
  ForestFitted(const MonthlyPanel& panel, const std::vector<int>& fit_rows,
               const HyperParams& hyper, const ModelContext& ctx) {
    const Eigen::MatrixXd x = rows_of(panel.design, fit_rows);
    const Eigen::VectorXd y = entries_of(panel.target, fit_rows);
    ForestConfig config;
    config.n_trees = static_cast<int>(hyper_get(hyper, "n_trees", 100));
    config.mtry = static_cast<int>(hyper_get(hyper, "mtry", -1));
    config.min_leaf_size = static_cast<int>(hyper_get(hyper, "min_leaf_size", 5));
    config.max_depth = static_cast<int>(hyper_get(hyper, "max_depth", -1));
    config.seed = ctx.seed;
    model_ = fit_random_forest(x, y, config);
  }

  double predict_row(const MonthlyPanel& panel, int row) const override {
    return predict_forest(model_, panel.design.row(row));
  }

private:
  ForestModel model_;
};

class GbmFitted : public FittedModel {
public:
  GbmFitted(const MonthlyPanel& panel, const std::vector<int>& fit_rows,
            const HyperParams& hyper, const ModelContext& ctx) {
    const Eigen::MatrixXd x = rows_of(panel.design, fit_rows);
    const Eigen::VectorXd y = entries_of(panel.target, fit_rows);
    GbmConfig config;
    config.n_trees = static_cast<int>(hyper_get(hyper, "n_trees", 100));
    config.shrinkage = hyper_get(hyper, "shrinkage", 0.1);
    config.tree_depth = static_cast<int>(hyper_get(hyper, "tree_depth", 3));
    config.min_leaf_size = static_cast<int>(hyper_get(hyper, "min_leaf_size", 1));
    config.seed = ctx.seed;
    model_ = fit_gbm(x, y, config);
  }

  double predict_row(const MonthlyPanel& panel, int row) const override {
    return predict_boosted(model_, panel.design.row(row));
  }

private:
  BoostedModel model_;
};

class DfmFitted : public FittedModel {
public:
  DfmFitted(const MonthlyPanel& panel, const std::vector<int>& fit_rows,
            const HyperParams& hyper, const ModelContext& ctx)
      : settings_(ctx.dfm) {
    settings_.r_factors = static_cast<int>(hyper_get(hyper, "r_factors", settings_.r_factors));
    settings_.p_lags = static_cast<int>(hyper_get(hyper, "p_lags", settings_.p_lags));

    if (settings_.columns.empty()) {
      columns_.resize(panel.n_cols());
      for (int j = 0; j < panel.n_cols(); ++j) columns_[j] = j;
    } else {
      for (const auto& id : settings_.columns) {
        const int j = panel.column_index(id);
        if (j < 0) throw ConfigError("dfm: unknown column '" + id + "'");
        columns_.push_back(j);
      }
    }

    target_visible_.assign(panel.n_months(), 0);
    int span_end = 0;
    for (int row : fit_rows) {
      target_visible_[row] = 1;
      span_end = std::max(span_end, row);
    }

    EmOptions options;
    options.max_iter = settings_.em_max_iter;
    options.tol = settings_.em_tol;
    const Eigen::MatrixXd data = build_data(panel, span_end);
    model_ = fit_dfm_em(data, settings_.r_factors, settings_.p_lags, options).model;
  }

  double predict_row(const MonthlyPanel& panel, int row) const override {
    const Eigen::MatrixXd data = build_data(panel, row);
    return dfm_nowcast(model_, data, static_cast<int>(columns_.size()), panel.target_stats);
  }

private:
  // Series in rows: selected predictors then the standardized target, over
  // months [0, last_row]. Target entries outside the fit rows are missing.
  Eigen::MatrixXd build_data(const MonthlyPanel& panel, int last_row) const {
    const int n = static_cast<int>(columns_.size()) + 1;
    const int T = last_row + 1;
    Eigen::MatrixXd data = Eigen::MatrixXd::Constant(n, T, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < columns_.size(); ++k) {
      const int j = columns_[k];
      for (int t = 0; t < T; ++t) {
        if (!panel.is_missing(t, j) && !std::isnan(panel.design(t, j))) {
          data(static_cast<int>(k), t) = panel.design(t, j);
        }
      }
    }
    const double sd = panel.target_stats.sd > 1e-12 ? panel.target_stats.sd : 1.0;
    for (int t = 0; t < T; ++t) {
      if (t < static_cast<int>(target_visible_.size()) && target_visible_[t] &&
          !std::isnan(panel.target[t])) {
        data(n - 1, t) = (panel.target[t] - panel.target_stats.mean) / sd;
      }
    }
    return data;
  }

  DfmSettings settings_;
  std::vector<int> columns_;
  std::vector<std::uint8_t> target_visible_;
  StateSpace model_;
};

} // namespace

std::unique_ptr<FittedModel> fit_model(const std::string& family, const MonthlyPanel& panel,
                                       const std::vector<int>& fit_rows,
                                       const HyperParams& hyper, const ModelContext& ctx) {
  if (fit_rows.empty()) throw DimensionError("fit_model: no fit rows");
  for (int row : fit_rows) {
    if (row < 0 || row >= panel.n_months()) throw DimensionError("fit_model: row out of range");
    if (std::isnan(panel.target[row])) {
      throw TargetGapError("fit_model: target missing at " + panel.months[row].to_string());
    }
  }

  if (family == "ar") return std::make_unique<ArFitted>(panel, fit_rows);
  if (family == "ridge" || family == "lasso" || family == "elastic_net" ||
      family == "adaptive_lasso") {
    return std::make_unique<LinearFitted>(family, panel, fit_rows, hyper);
  }
  if (family == "random_forest") return std::make_unique<ForestFitted>(panel, fit_rows, hyper, ctx);
  if (family == "gbm") return std::make_unique<GbmFitted>(panel, fit_rows, hyper, ctx);
  if (family == "dfm") return std::make_unique<DfmFitted>(panel, fit_rows, hyper, ctx);
  throw ConfigError("unknown model family '" + family + "'");
}

} // namespace nowcast
