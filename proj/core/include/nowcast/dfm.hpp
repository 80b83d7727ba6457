#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nowcast/panel.hpp"

namespace nowcast {

// Linear-Gaussian state space in companion form:
//   x_t = C s_t + e_t,   e_t ~ N(0, diag(R))
//   s_t = A s_{t-1} + u_t, u_t ~ N(0, Q)
// where s_t stacks (f_t, f_{t-1}, ..., f_{t-p_lags+1}) and only the leading
// r_factors columns of C and rows of Q are free. init_mean/init_cov describe
// the state at the first time index before any observation.
struct StateSpace {
  Eigen::MatrixXd C; // n_series x state_dim
  Eigen::MatrixXd A; // state_dim x state_dim companion
  Eigen::MatrixXd Q; // state_dim x state_dim, top-left r x r block free
  Eigen::VectorXd R; // diagonal measurement variances, floored at 1e-8
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;
  int r_factors = 1;
  int p_lags = 1;
  int n_series = 0;

  int state_dim() const { return r_factors * p_lags; }

  // Checks dimensions, the companion structure, diagonal R floor, PSD Q, and
  // that the transition is stationary (spectral radius < 1).
  void validate() const;
};

struct KalmanOutput {
  Eigen::MatrixXd filtered_mean;  // state_dim x T
  Eigen::MatrixXd predicted_mean; // state_dim x T (one-step-ahead)
  Eigen::MatrixXd smoothed_mean;  // state_dim x T
  std::vector<Eigen::MatrixXd> filtered_cov;
  std::vector<Eigen::MatrixXd> predicted_cov;
  std::vector<Eigen::MatrixXd> smoothed_cov;
  // Smoothed Cov(s_t, s_{t-1}); entry t is defined for t >= 1.
  std::vector<Eigen::MatrixXd> lag_one_cov;
  double log_likelihood = 0.0;
};

// Filter + fixed-interval smoother over data (n_series x T, NaN = missing).
// Each measurement update uses only the observed rows of C and R; fully
// missing time points are prediction-only. The log-likelihood accumulates the
// exact Gaussian prediction-error decomposition over observed entries.
KalmanOutput kalman_filter_smoother(const StateSpace& model, const Eigen::MatrixXd& data);

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-6; // relative log-likelihood change
};

struct EmResult {
  StateSpace model;
  KalmanOutput smoother; // at the returned parameters
  std::vector<double> loglik_path;
  bool converged = false;
  int n_iter = 0;
};

// EM estimation on a standardized panel (n_series x T, NaN = missing).
// Initialization from principal components of the mean-filled data; M-step
// uses the closed-form updates with missing-data corrections.
EmResult fit_dfm_em(const Eigen::MatrixXd& data, int r_factors, int p_lags,
                    const EmOptions& options = {});

// Nowcast for one series of the panel (usually the target appended as the
// last row): the smoothed fitted value C_row * s_T for the final time index,
// de-standardized with the supplied stats.
double dfm_nowcast(const StateSpace& model, const Eigen::MatrixXd& data, int target_row,
                   const ColumnStats& target_stats);

std::string state_space_to_json(const StateSpace& model);
StateSpace state_space_from_json(const std::string& text);

// Smoothed factor paths as CSV: one row per time index, columns per state.
void write_factors_csv(const KalmanOutput& output, const std::string& path);

} // namespace nowcast
