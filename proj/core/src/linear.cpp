#include "nowcast/linear.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "nowcast/errors.hpp"

namespace nowcast {

void PenaltySpec::validate(int p) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("penalty: lambda must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("penalty: alpha must lie in [0, 1]");
  if (weights.size() != 0) {
    if (weights.size() != p) throw DimensionError("penalty: weight vector length mismatch");
    for (int j = 0; j < weights.size(); ++j) {
      if (!(weights[j] >= 0.0) || !std::isfinite(weights[j])) {
        throw ConfigError("penalty: weights must be finite and >= 0");
      }
    }
  }
  if (!(adapt_exponent >= 0.0)) throw ConfigError("penalty: adapt_exponent must be >= 0");
}

LinearFit fit_ar1(const Eigen::VectorXd& y) {
  if (y.size() < 3) throw DimensionError("ar1: need at least 3 observations");
  for (int i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) throw NumericInputError("ar1: non-finite observation");
  }
  const int n = static_cast<int>(y.size()) - 1;
  const Eigen::VectorXd lag = y.head(n);
  const Eigen::VectorXd cur = y.tail(n);
  const double lag_mean = lag.mean();
  const double cur_mean = cur.mean();
  const double sxx = (lag.array() - lag_mean).square().sum();
  if (!(sxx > 1e-12 * static_cast<double>(n))) {
    throw DegenerateRegressorError("ar1: lagged regressor has zero variance");
  }
  const double sxy = ((lag.array() - lag_mean) * (cur.array() - cur_mean)).sum();
  const double slope = sxy / sxx;

  LinearFit fit;
  fit.intercept = cur_mean - slope * lag_mean;
  fit.coefficients = Eigen::VectorXd::Constant(1, slope);
  fit.converged = true;
  fit.n_iterations = 1;
  fit.training_mse = (cur.array() - fit.intercept - slope * lag.array()).square().mean();
  return fit;
}

namespace {
double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}
} // namespace

LinearFit fit_penalized(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const PenaltySpec& spec, const FitOptions& options) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n) throw DimensionError("fit_penalized: rows(X) != len(y)");
  if (!X.allFinite() || !y.allFinite()) throw NumericInputError("fit_penalized: non-finite input");
  spec.validate(p);

  const Eigen::VectorXd weights =
      spec.weights.size() == 0 ? Eigen::VectorXd::Ones(p) : spec.weights;

  Eigen::VectorXd col_sq(p);
  for (int j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm();

  LinearFit fit;
  fit.spec = spec;
  fit.has_intercept = options.fit_intercept;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  fit.intercept = 0.0;

  Eigen::VectorXd residual = y;
  if (options.fit_intercept && n > 0) {
    fit.intercept = y.mean();
    residual.array() -= fit.intercept;
  }

  const double l1_base = spec.lambda * spec.alpha;
  const double l2 = spec.lambda * (1.0 - spec.alpha);

  int sweep = 0;
  bool converged = false;
  for (; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      const double old = fit.coefficients[j];
      const double rho = X.col(j).dot(residual) + col_sq[j] * old;
      const double denom = col_sq[j] + l2;
      double updated = 0.0;
      if (denom > 0.0) updated = soft_threshold(rho, l1_base * weights[j] / 2.0) / denom;
      if (updated != old) {
        residual -= X.col(j) * (updated - old);
        fit.coefficients[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (options.fit_intercept && n > 0) {
      const double shift = residual.mean();
      if (shift != 0.0) {
        fit.intercept += shift;
        residual.array() -= shift;
        max_change = std::max(max_change, std::abs(shift));
      }
    }
    if (max_change < options.tol) {
      converged = true;
      ++sweep;
      break;
    }
  }

  fit.n_iterations = sweep;
  fit.converged = converged;
  fit.training_mse = n > 0 ? residual.squaredNorm() / n : 0.0;
  return fit;
}

Eigen::VectorXd derive_adaptive_weights(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        double gamma) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n) throw DimensionError("adaptive weights: rows(X) != len(y)");
  if (!(gamma >= 0.0)) throw ConfigError("adaptive weights: gamma must be >= 0");

  Eigen::VectorXd pilot;
  if (n > p) {
    pilot = X.colPivHouseholderQr().solve(y);
  } else {
    const Eigen::MatrixXd gram =
        X.transpose() * X + 1e-3 * Eigen::MatrixXd::Identity(p, p);
    pilot = gram.ldlt().solve(X.transpose() * y);
  }

  Eigen::VectorXd weights(p);
  for (int j = 0; j < p; ++j) {
    weights[j] = std::pow(std::abs(pilot[j]) + 1e-6, -gamma);
  }
  return weights;
}

double predict_linear(const LinearFit& fit, const Eigen::VectorXd& x) {
  if (x.size() != fit.coefficients.size()) {
    throw DimensionError("predict_linear: expected " + std::to_string(fit.coefficients.size()) +
                         " predictors, got " + std::to_string(x.size()));
  }
  return fit.intercept + fit.coefficients.dot(x);
}

double penalized_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const PenaltySpec& spec, double intercept,
                           const Eigen::VectorXd& beta) {
  const Eigen::VectorXd weights =
      spec.weights.size() == 0 ? Eigen::VectorXd::Ones(X.cols()) : spec.weights;
  const double rss = (y.array() - intercept - (X * beta).array()).square().sum();
  double penalty = 0.0;
  for (int j = 0; j < beta.size(); ++j) {
    penalty += spec.alpha * weights[j] * std::abs(beta[j]) +
               (1.0 - spec.alpha) * beta[j] * beta[j];
  }
  return rss + spec.lambda * penalty;
}

std::string linear_fit_to_json(const LinearFit& fit) {
  nlohmann::json j;
  j["intercept"] = fit.intercept;
  j["coefficients"] = std::vector<double>(fit.coefficients.data(),
                                          fit.coefficients.data() + fit.coefficients.size());
  j["spec"] = {{"lambda", fit.spec.lambda},
               {"alpha", fit.spec.alpha},
               {"adapt_exponent", fit.spec.adapt_exponent}};
  if (fit.spec.weights.size() != 0) {
    j["spec"]["weights"] = std::vector<double>(fit.spec.weights.data(),
                                               fit.spec.weights.data() + fit.spec.weights.size());
  }
  j["has_intercept"] = fit.has_intercept;
  j["n_iterations"] = fit.n_iterations;
  j["converged"] = fit.converged;
  j["training_mse"] = fit.training_mse;
  return j.dump(2);
}

LinearFit linear_fit_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  LinearFit fit;
  fit.intercept = j.at("intercept").get<double>();
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  fit.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), coef.size());
  fit.spec.lambda = j.at("spec").at("lambda").get<double>();
  fit.spec.alpha = j.at("spec").at("alpha").get<double>();
  fit.spec.adapt_exponent = j.at("spec").at("adapt_exponent").get<double>();
  if (j.at("spec").contains("weights")) {
    const auto w = j.at("spec").at("weights").get<std::vector<double>>();
    fit.spec.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  }
  fit.has_intercept = j.at("has_intercept").get<bool>();
  fit.n_iterations = j.at("n_iterations").get<int>();
  fit.converged = j.at("converged").get<bool>();
  fit.training_mse = j.at("training_mse").get<double>();
  return fit;
}

} // namespace nowcast
