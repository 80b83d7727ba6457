#include "nowcast/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "nowcast/errors.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

SyntheticPanel generate_synthetic_panel(std::uint64_t seed, int n_months, int p, int r_factors,
                                        double nonlinear_share) {
  if (n_months <= 24) throw DimensionError("synthetic: n_months must exceed 24");
  if (r_factors < 1 || p < r_factors) {
    throw DimensionError("synthetic: need p >= r_factors >= 1");
  }

  Rng factor_rng(derive_seed(seed, 0));
  Rng loading_rng(derive_seed(seed, 1));
  Rng idio_rng(derive_seed(seed, 2));
  Rng target_rng(derive_seed(seed, 3));

  SyntheticTruth truth;
  truth.nonlinear_share = nonlinear_share;
  truth.idio_noise_sd = 0.7;
  truth.target_noise_sd = 0.35;
  truth.target_level = 3.0;
  truth.target_scale = 1.5;

  truth.factor_ar = Eigen::VectorXd(r_factors);
  for (int k = 0; k < r_factors; ++k) {
    truth.factor_ar[k] = r_factors > 1 ? 0.75 - 0.2 * k / (r_factors - 1) : 0.75;
  }

  // Stationary AR(1) factors with unit marginal variance.
  truth.factors = Eigen::MatrixXd(n_months, r_factors);
  for (int k = 0; k < r_factors; ++k) {
    const double phi = truth.factor_ar[k];
    const double innov_sd = std::sqrt(1.0 - phi * phi);
    double f = factor_rng.normal();
    truth.factors(0, k) = f;
    for (int t = 1; t < n_months; ++t) {
      f = phi * f + innov_sd * factor_rng.normal();
      truth.factors(t, k) = f;
    }
  }

  truth.loadings = Eigen::MatrixXd(p, r_factors);
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < r_factors; ++k) truth.loadings(j, k) = loading_rng.normal();
  }

  truth.target_coeffs = Eigen::VectorXd(r_factors);
  double b = 1.5;
  for (int k = 0; k < r_factors; ++k) {
    truth.target_coeffs[k] = b;
    b *= -0.8;
  }

  Eigen::MatrixXd raw = truth.factors * truth.loadings.transpose(); // n x p
  for (int t = 0; t < n_months; ++t) {
    for (int j = 0; j < p; ++j) raw(t, j) += truth.idio_noise_sd * idio_rng.normal();
  }

  Eigen::VectorXd y(n_months);
  for (int t = 0; t < n_months; ++t) {
    double v = truth.factors.row(t).dot(truth.target_coeffs);
    const double f0 = truth.factors(t, 0);
    const double f1 = r_factors > 1 ? truth.factors(t, 1) : f0;
    if (f0 > 0.0) v += nonlinear_share * 1.5 * f0 * f1;
    v += truth.target_noise_sd * target_rng.normal();
    y[t] = truth.target_level + truth.target_scale * v;
  }

  SyntheticPanel out;
  out.truth = std::move(truth);
  MonthlyPanel& panel = out.panel;
  const Month start(2008, 1);
  panel.months.reserve(n_months);
  for (int i = 0; i < n_months; ++i) panel.months.push_back(start.plus(i));

  int train_idx = static_cast<int>(0.43 * n_months);
  train_idx = std::max(12, std::min(train_idx, n_months - 2));
  panel.train_end = panel.months[train_idx];
  panel.test_end = panel.months[n_months - 1];

  panel.target = y;
  {
    const auto train = y.head(train_idx + 1);
    const double mean = train.mean();
    const double sd = std::sqrt((train.array() - mean).square().sum() / (train.size() - 1));
    panel.target_stats = {mean, sd};
  }

  panel.design = Eigen::MatrixXd(n_months, p);
  panel.missing_mask.assign(static_cast<std::size_t>(n_months) * p, 0);
  const int n_structured = std::max(1, p * 53 / 91);
  char buf[24];
  for (int j = 0; j < p; ++j) {
    const auto train = raw.col(j).head(train_idx + 1);
    const double mean = train.mean();
    const double sd = std::sqrt((train.array() - mean).square().sum() / (train.size() - 1));
    if (!(sd > 1e-12)) throw DegenerateColumnError("synthetic: degenerate column");
    panel.design.col(j) = (raw.col(j).array() - mean) / sd;
    std::snprintf(buf, sizeof(buf), "x%03d", j + 1);
    panel.column_ids.push_back(buf);
    panel.column_categories.push_back(j < n_structured ? Category::structured
                                                       : Category::unstructured);
    panel.column_stats.push_back({mean, sd});
  }

  panel.validate();
  return out;
}

} // namespace nowcast
