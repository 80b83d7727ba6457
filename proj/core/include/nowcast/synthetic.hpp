#pragma once

#include <cstdint>

#include "nowcast/panel.hpp"

namespace nowcast {

// Ground truth behind a generated panel, kept for oracle checks.
struct SyntheticTruth {
  Eigen::MatrixXd loadings;      // p x r
  Eigen::VectorXd factor_ar;     // per-factor AR(1) coefficient
  Eigen::VectorXd target_coeffs; // linear weights on the factors
  Eigen::MatrixXd factors;       // n_months x r
  double nonlinear_share = 0.0;
  double idio_noise_sd = 0.0;
  double target_noise_sd = 0.0;
  double target_level = 0.0;
  double target_scale = 1.0;
};

struct SyntheticPanel {
  MonthlyPanel panel;
  SyntheticTruth truth;
};

// Factor-model data generator used by the bundled demo and the test suites.
// Predictors load on r stationary AR(1) factors plus idiosyncratic noise; the
// target is a linear combination of the factors plus an optional threshold
// interaction (weighted by nonlinear_share) plus noise. Deterministic in seed.
// The panel starts at 2008-01; the training window covers the first 43% of
// the months so the default 185-month panel splits at 2014-08.
SyntheticPanel generate_synthetic_panel(std::uint64_t seed, int n_months, int p, int r_factors,
                                        double nonlinear_share);

} // namespace nowcast
