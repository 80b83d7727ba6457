#include "nowcast/dfm.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

constexpr double kRFloor = 1e-8;
constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double spectral_radius(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/false);
  double radius = 0.0;
  for (int i = 0; i < a.rows(); ++i) radius = std::max(radius, std::abs(solver.eigenvalues()[i]));
  return radius;
}

} // namespace

void StateSpace::validate() const {
  const int s = state_dim();
  if (C.rows() != n_series || C.cols() != s) throw DimensionError("state space: C shape");
  if (A.rows() != s || A.cols() != s) throw DimensionError("state space: A shape");
  if (Q.rows() != s || Q.cols() != s) throw DimensionError("state space: Q shape");
  if (R.size() != n_series) throw DimensionError("state space: R length");
  if (init_mean.size() != s || init_cov.rows() != s || init_cov.cols() != s) {
    throw DimensionError("state space: init moments shape");
  }
  for (int i = 0; i < n_series; ++i) {
    if (!(R[i] >= kRFloor)) throw ConfigError("state space: R entries must be >= 1e-8");
  }
  // Companion structure: identity blocks shifting the lagged factors.
  const int r = r_factors;
  for (int lag = 1; lag < p_lags; ++lag) {
    const Eigen::MatrixXd block = A.block(lag * r, (lag - 1) * r, r, r);
    if ((block - Eigen::MatrixXd::Identity(r, r)).norm() > 1e-12) {
      throw ConfigError("state space: companion identity block missing");
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(Q));
  if (es.eigenvalues().minCoeff() < -1e-8) throw ConfigError("state space: Q not PSD");
  if (spectral_radius(A) >= 1.0) throw ConfigError("state space: transition not stationary");
}

KalmanOutput kalman_filter_smoother(const StateSpace& model, const Eigen::MatrixXd& data) {
  const int s = model.state_dim();
  const int n = model.n_series;
  const int T = static_cast<int>(data.cols());
  if (data.rows() != n) throw DimensionError("kalman: data rows != n_series");
  if (T < 1) throw DimensionError("kalman: empty data");

  KalmanOutput out;
  out.filtered_mean.resize(s, T);
  out.predicted_mean.resize(s, T);
  out.smoothed_mean.resize(s, T);
  out.filtered_cov.resize(T);
  out.predicted_cov.resize(T);
  out.smoothed_cov.resize(T);
  out.lag_one_cov.assign(T, Eigen::MatrixXd::Zero(s, s));
  out.log_likelihood = 0.0;

  Eigen::VectorXd mean = model.init_mean;
  Eigen::MatrixXd cov = symmetrize(model.init_cov);

  // Gain of the final update, needed to seed the lag-one recursion.
  Eigen::MatrixXd last_gain_c = Eigen::MatrixXd::Zero(s, s); // K_T * C_T

  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      mean = model.A * mean;
      cov = symmetrize(model.A * cov * model.A.transpose() + model.Q);
    }
    out.predicted_mean.col(t) = mean;
    out.predicted_cov[t] = cov;

    std::vector<int> observed;
    observed.reserve(n);
    for (int i = 0; i < n; ++i) {
      if (!std::isnan(data(i, t))) observed.push_back(i);
    }

    if (!observed.empty()) {
      const int m = static_cast<int>(observed.size());
      Eigen::MatrixXd c_obs(m, s);
      Eigen::VectorXd r_obs(m);
      Eigen::VectorXd innovation(m);
      for (int k = 0; k < m; ++k) {
        c_obs.row(k) = model.C.row(observed[k]);
        r_obs[k] = model.R[observed[k]];
        innovation[k] = data(observed[k], t) - model.C.row(observed[k]).dot(mean);
      }
      Eigen::MatrixXd innovation_cov = c_obs * cov * c_obs.transpose();
      innovation_cov.diagonal() += r_obs;
      innovation_cov = symmetrize(innovation_cov);

      Eigen::LLT<Eigen::MatrixXd> llt(innovation_cov);
      if (llt.info() != Eigen::Success) {
        throw NumericalStabilityError("kalman: innovation covariance not PD at t=" +
                                      std::to_string(t));
      }
      // K = P C' S^{-1} = (S^{-1} C P)' since P is symmetric.
      const Eigen::MatrixXd gain = llt.solve(c_obs * cov).transpose();

      mean += gain * innovation;
      // Joseph form keeps the covariance symmetric PSD.
      const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(s, s) - gain * c_obs;
      cov = symmetrize(j * cov * j.transpose() +
                       gain * r_obs.asDiagonal() * gain.transpose());

      double log_det = 0.0;
      for (int k = 0; k < m; ++k) log_det += 2.0 * std::log(llt.matrixL()(k, k));
      const double quad = innovation.dot(llt.solve(innovation));
      out.log_likelihood += -0.5 * (m * kLog2Pi + log_det + quad);

      if (t == T - 1) last_gain_c = gain * c_obs;
    } else if (t == T - 1) {
      last_gain_c.setZero();
    }

    out.filtered_mean.col(t) = mean;
    out.filtered_cov[t] = cov;
  }

  // Rauch-Tung-Striebel backward pass.
  out.smoothed_mean.col(T - 1) = out.filtered_mean.col(T - 1);
  out.smoothed_cov[T - 1] = out.filtered_cov[T - 1];

  std::vector<Eigen::MatrixXd> smoother_gain(T, Eigen::MatrixXd::Zero(s, s));
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd& p_pred = out.predicted_cov[t + 1];
    Eigen::LDLT<Eigen::MatrixXd> ldlt(symmetrize(p_pred));
    const Eigen::MatrixXd gain =
        (ldlt.solve(model.A * out.filtered_cov[t])).transpose(); // P_t A' P_pred^{-1}
    smoother_gain[t] = gain;
    out.smoothed_mean.col(t) =
        out.filtered_mean.col(t) +
        gain * (out.smoothed_mean.col(t + 1) - out.predicted_mean.col(t + 1));
    out.smoothed_cov[t] = symmetrize(
        out.filtered_cov[t] +
        gain * (out.smoothed_cov[t + 1] - p_pred) * gain.transpose());
  }

  // Lag-one smoothed cross-covariances (Shumway-Stoffer recursion).
  if (T >= 2) {
    out.lag_one_cov[T - 1] =
        (Eigen::MatrixXd::Identity(s, s) - last_gain_c) * model.A * out.filtered_cov[T - 2];
    for (int t = T - 2; t >= 1; --t) {
      out.lag_one_cov[t] =
          out.filtered_cov[t] * smoother_gain[t - 1].transpose() +
          smoother_gain[t] *
              (out.lag_one_cov[t + 1] - model.A * out.filtered_cov[t]) *
              smoother_gain[t - 1].transpose();
    }
  }
  return out;
}

namespace {

// Principal-components start: missing entries filled with zero (the column
// mean of standardized data), loadings from the leading eigenvectors.
StateSpace pca_initialize(const Eigen::MatrixXd& data, int r, int p_lags) {
  const int n = static_cast<int>(data.rows());
  const int T = static_cast<int>(data.cols());
  Eigen::MatrixXd filled = data;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      if (std::isnan(filled(i, t))) filled(i, t) = 0.0;
    }
  }

  const Eigen::MatrixXd cov = filled * filled.transpose() / static_cast<double>(T);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(cov));
  Eigen::MatrixXd loadings(n, r);
  for (int k = 0; k < r; ++k) loadings.col(k) = es.eigenvectors().col(n - 1 - k);

  Eigen::MatrixXd factors = loadings.transpose() * filled; // r x T
  // Scale factors to unit variance; fold the scale into the loadings.
  for (int k = 0; k < r; ++k) {
    const double sd = std::sqrt(factors.row(k).squaredNorm() / T);
    if (sd > 1e-12) {
      factors.row(k) /= sd;
      loadings.col(k) *= sd;
    }
  }

  const int s = r * p_lags;
  StateSpace model;
  model.r_factors = r;
  model.p_lags = p_lags;
  model.n_series = n;
  model.C = Eigen::MatrixXd::Zero(n, s);
  model.C.leftCols(r) = loadings;

  // VAR(p_lags) on the PCA factors.
  Eigen::MatrixXd var_coef = Eigen::MatrixXd::Zero(r, s);
  Eigen::MatrixXd innov_cov = Eigen::MatrixXd::Identity(r, r);
  if (T > s + 2) {
    const int rows = T - p_lags;
    Eigen::MatrixXd lhs(rows, r);
    Eigen::MatrixXd rhs(rows, s);
    for (int t = p_lags; t < T; ++t) {
      lhs.row(t - p_lags) = factors.col(t).transpose();
      for (int lag = 1; lag <= p_lags; ++lag) {
        rhs.block(t - p_lags, (lag - 1) * r, 1, r) = factors.col(t - lag).transpose();
      }
    }
    const Eigen::MatrixXd gram =
        rhs.transpose() * rhs + 1e-8 * Eigen::MatrixXd::Identity(s, s);
    var_coef = gram.ldlt().solve(rhs.transpose() * lhs).transpose();
    const Eigen::MatrixXd resid = lhs - rhs * var_coef.transpose();
    innov_cov = symmetrize(resid.transpose() * resid / static_cast<double>(rows));
  }
  // Shrink toward stationarity if the VAR start is explosive.
  model.A = Eigen::MatrixXd::Zero(s, s);
  model.A.topRows(r) = var_coef;
  for (int lag = 1; lag < p_lags; ++lag) {
    model.A.block(lag * r, (lag - 1) * r, r, r).setIdentity();
  }
  while (spectral_radius(model.A) >= 0.999) model.A.topRows(r) *= 0.95;

  model.Q = Eigen::MatrixXd::Zero(s, s);
  model.Q.topLeftCorner(r, r) = innov_cov;

  model.R = Eigen::VectorXd(n);
  const Eigen::MatrixXd fitted = loadings * factors;
  for (int i = 0; i < n; ++i) {
    double ss = 0.0;
    int count = 0;
    for (int t = 0; t < T; ++t) {
      if (!std::isnan(data(i, t))) {
        const double e = data(i, t) - fitted(i, t);
        ss += e * e;
        ++count;
      }
    }
    model.R[i] = std::max(kRFloor, count > 0 ? ss / count : 1.0);
  }

  model.init_mean = Eigen::VectorXd::Zero(s);
  model.init_cov = Eigen::MatrixXd::Identity(s, s);
  return model;
}

} // namespace

EmResult fit_dfm_em(const Eigen::MatrixXd& data, int r_factors, int p_lags,
                    const EmOptions& options) {
  const int n = static_cast<int>(data.rows());
  const int T = static_cast<int>(data.cols());
  if (r_factors < 1 || p_lags < 1) throw ConfigError("dfm: r_factors and p_lags must be >= 1");
  if (r_factors * p_lags >= n * T) throw ConfigError("dfm: state dimension exceeds data size");
  if (T < r_factors * p_lags + 2) throw ConfigError("dfm: too few time points");

  const int r = r_factors;
  const int s = r * p_lags;

  EmResult result;
  result.model = pca_initialize(data, r, p_lags);

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iter; ++iter) {
    KalmanOutput ks = kalman_filter_smoother(result.model, data);
    result.loglik_path.push_back(ks.log_likelihood);
    result.n_iter = iter + 1;

    const double ll = ks.log_likelihood;
    if (iter > 0) {
      const double denom = std::max({std::abs(prev_ll), std::abs(ll), 1.0});
      if (std::abs(ll - prev_ll) / denom < options.tol) {
        result.converged = true;
        result.smoother = std::move(ks);
        return result;
      }
    }
    prev_ll = ll;

    // Smoothed second moments.
    std::vector<Eigen::MatrixXd> ezz(T);     // E[s_t s_t']
    std::vector<Eigen::MatrixXd> ezz_lag(T); // E[s_t s_{t-1}'] for t >= 1
    for (int t = 0; t < T; ++t) {
      ezz[t] = ks.smoothed_cov[t] +
               ks.smoothed_mean.col(t) * ks.smoothed_mean.col(t).transpose();
      if (t >= 1) {
        ezz_lag[t] = ks.lag_one_cov[t] +
                     ks.smoothed_mean.col(t) * ks.smoothed_mean.col(t - 1).transpose();
      }
    }

    // Loadings and measurement noise, correcting for missing entries.
    Eigen::MatrixXd new_c = Eigen::MatrixXd::Zero(n, s);
    Eigen::VectorXd new_r(n);
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd sum_ff = Eigen::MatrixXd::Zero(r, r);
      Eigen::VectorXd sum_xf = Eigen::VectorXd::Zero(r);
      for (int t = 0; t < T; ++t) {
        if (std::isnan(data(i, t))) continue;
        sum_ff += ezz[t].topLeftCorner(r, r);
        sum_xf += data(i, t) * ks.smoothed_mean.col(t).head(r);
      }
      Eigen::VectorXd ci = Eigen::VectorXd::Zero(r);
      if (sum_ff.norm() > 0.0) {
        ci = (sum_ff + 1e-12 * Eigen::MatrixXd::Identity(r, r)).ldlt().solve(sum_xf);
      }
      new_c.row(i).head(r) = ci.transpose();

      // Exact M-step over the observed entries of series i.
      double acc = 0.0;
      int observed = 0;
      for (int t = 0; t < T; ++t) {
        if (std::isnan(data(i, t))) continue;
        const double fit = ci.dot(ks.smoothed_mean.col(t).head(r));
        acc += data(i, t) * data(i, t) - 2.0 * data(i, t) * fit +
               ci.dot(ezz[t].topLeftCorner(r, r) * ci);
        ++observed;
      }
      new_r[i] = observed > 0 ? std::max(kRFloor, acc / observed) : result.model.R[i];
    }

    // Transition: regression of the current factor block on the full state.
    Eigen::MatrixXd s_lag = Eigen::MatrixXd::Zero(s, s);  // sum E[s_{t-1} s_{t-1}']
    Eigen::MatrixXd s_cross = Eigen::MatrixXd::Zero(r, s); // sum E[f_t s_{t-1}']
    Eigen::MatrixXd s_cur = Eigen::MatrixXd::Zero(r, r);   // sum E[f_t f_t']
    for (int t = 1; t < T; ++t) {
      s_lag += ezz[t - 1];
      s_cross += ezz_lag[t].topRows(r);
      s_cur += ezz[t].topLeftCorner(r, r);
    }
    const Eigen::MatrixXd var_coef =
        (s_lag + 1e-12 * Eigen::MatrixXd::Identity(s, s))
            .ldlt()
            .solve(s_cross.transpose())
            .transpose(); // r x s
    Eigen::MatrixXd new_q =
        (s_cur - var_coef * s_cross.transpose()) / static_cast<double>(T - 1);
    new_q = symmetrize(new_q);

    result.model.C = new_c;
    result.model.R = new_r;
    result.model.A.topRows(r) = var_coef;
    result.model.Q.topLeftCorner(r, r) = new_q;
  }

  result.smoother = kalman_filter_smoother(result.model, data);
  result.converged = false;
  return result;
}

double dfm_nowcast(const StateSpace& model, const Eigen::MatrixXd& data, int target_row,
                   const ColumnStats& target_stats) {
  if (target_row < 0 || target_row >= model.n_series) {
    throw DimensionError("dfm_nowcast: target row out of range");
  }
  bool any = false;
  for (int t = 0; t < data.cols(); ++t) {
    if (!std::isnan(data(target_row, t))) {
      any = true;
      break;
    }
  }
  if (!any) throw TargetMissingError("dfm_nowcast: target series entirely missing");

  const KalmanOutput ks = kalman_filter_smoother(model, data);
  const int last = static_cast<int>(data.cols()) - 1;
  const double standardized = model.C.row(target_row).dot(ks.smoothed_mean.col(last));
  return target_stats.mean + target_stats.sd * standardized;
}

std::string state_space_to_json(const StateSpace& model) {
  auto matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  nlohmann::json j;
  j["r_factors"] = model.r_factors;
  j["p_lags"] = model.p_lags;
  j["n_series"] = model.n_series;
  j["C"] = matrix(model.C);
  j["A"] = matrix(model.A);
  j["Q"] = matrix(model.Q);
  j["R"] = std::vector<double>(model.R.data(), model.R.data() + model.R.size());
  j["init_mean"] =
      std::vector<double>(model.init_mean.data(), model.init_mean.data() + model.init_mean.size());
  j["init_cov"] = matrix(model.init_cov);
  return j.dump(2);
}

StateSpace state_space_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  auto matrix = [](const nlohmann::json& rows) {
    const int nr = static_cast<int>(rows.size());
    const int nc = nr > 0 ? static_cast<int>(rows[0].size()) : 0;
    Eigen::MatrixXd m(nr, nc);
    for (int i = 0; i < nr; ++i) {
      for (int k = 0; k < nc; ++k) m(i, k) = rows[i][k].get<double>();
    }
    return m;
  };
  StateSpace model;
  model.r_factors = j.at("r_factors").get<int>();
  model.p_lags = j.at("p_lags").get<int>();
  model.n_series = j.at("n_series").get<int>();
  model.C = matrix(j.at("C"));
  model.A = matrix(j.at("A"));
  model.Q = matrix(j.at("Q"));
  const auto r = j.at("R").get<std::vector<double>>();
  model.R = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
  const auto im = j.at("init_mean").get<std::vector<double>>();
  model.init_mean = Eigen::Map<const Eigen::VectorXd>(im.data(), im.size());
  model.init_cov = matrix(j.at("init_cov"));
  return model;
}

void write_factors_csv(const KalmanOutput& output, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "t";
  for (int k = 0; k < output.smoothed_mean.rows(); ++k) out << ",state" << k;
  out << "\n";
  for (int t = 0; t < output.smoothed_mean.cols(); ++t) {
    out << t;
    for (int k = 0; k < output.smoothed_mean.rows(); ++k) {
      out << "," << output.smoothed_mean(k, t);
    }
    out << "\n";
  }
}

} // namespace nowcast
