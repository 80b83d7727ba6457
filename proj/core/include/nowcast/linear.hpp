#pragma once

#include <Eigen/Dense>
#include <string>

namespace nowcast {

// Penalty of the unified objective
//   sum_i (y_i - b0 - x_i'b)^2 + lambda * sum_j (alpha * w_j * |b_j| + (1 - alpha) * b_j^2)
// alpha = 1 is the L1 penalty, alpha = 0 the L2 penalty; the intercept is
// never penalized. Residual sum of squares is unscaled (no 1/n factor).
struct PenaltySpec {
  double lambda = 0.0;
  double alpha = 1.0;
  Eigen::VectorXd weights;     // empty means all ones
  double adapt_exponent = 1.0; // gamma used when deriving weights from a pilot

  void validate(int p) const;
};

struct LinearFit {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  PenaltySpec spec;
  bool has_intercept = true;
  int n_iterations = 0;
  bool converged = false;
  double training_mse = 0.0;
};

struct FitOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
  bool fit_intercept = true;
};

// AR(1) benchmark: OLS of y_t on (1, y_{t-1}).
LinearFit fit_ar1(const Eigen::VectorXd& y);

// Cyclic coordinate descent with soft-thresholding, coordinates visited in
// ascending column order. Converged when the largest absolute parameter
// change over a full sweep drops below tol.
LinearFit fit_penalized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const PenaltySpec& spec, const FitOptions& options = {});

// Adaptation factors w_j = 1 / (|pilot_j| + 1e-6)^gamma. Pilot fit is OLS
// when n > p, otherwise ridge with lambda = 1e-3.
Eigen::VectorXd derive_adaptive_weights(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        double gamma);

double predict_linear(const LinearFit& fit, const Eigen::VectorXd& x);

// Objective value at the fit's parameters; used by monotonicity checks.
double penalized_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const PenaltySpec& spec, double intercept,
                           const Eigen::VectorXd& beta);

std::string linear_fit_to_json(const LinearFit& fit);
LinearFit linear_fit_from_json(const std::string& text);

} // namespace nowcast
