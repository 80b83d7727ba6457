#include "nowcast/tuning.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "nowcast/errors.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

void SearchSpace::validate() const {
  if (params.empty()) throw ConfigError("search space: no hyperparameters");
  for (const auto& hp : params) {
    if (!(hp.lower < hp.upper)) {
      throw ConfigError("search space: lower >= upper for '" + hp.name + "'");
    }
    if (hp.log_scale && !(hp.lower > 0.0)) {
      throw ConfigError("search space: log scale needs positive bounds for '" + hp.name + "'");
    }
    if (hp.integer &&
        (hp.lower != std::floor(hp.lower) || hp.upper != std::floor(hp.upper))) {
      throw ConfigError("search space: integer bounds must be integral for '" + hp.name + "'");
    }
  }
}

CvPlan make_time_folds(Month first, Month last, int k) {
  const int n = month_span(first, last);
  if (k < 1) throw ConfigError("folds: k must be >= 1");
  if (n < k) throw ConfigError("folds: window of " + std::to_string(n) +
                               " months cannot hold " + std::to_string(k) + " folds");
  CvPlan plan;
  plan.window_start = first;
  const int base = n / k;
  const int remainder = n % k;
  int begin = 0;
  for (int f = 0; f < k; ++f) {
    const int size = base + (f < remainder ? 1 : 0);
    plan.folds.emplace_back(begin, begin + size);
    begin += size;
  }
  return plan;
}

double cv_mse(const std::string& family, const HyperParams& hyper, const MonthlyPanel& panel,
              const CvPlan& plan, const ModelContext& ctx) {
  const int offset = panel.index_of(plan.window_start);
  if (offset < 0) throw ConfigError("cv: plan window not inside the panel");

  double total = 0.0;
  int count = 0;
  for (int f = 0; f < plan.k(); ++f) {
    const auto [fold_begin, fold_end] = plan.folds[f];
    std::vector<int> fit_rows;
    for (int g = 0; g < plan.k(); ++g) {
      if (g == f) continue;
      for (int i = plan.folds[g].first; i < plan.folds[g].second; ++i) {
        fit_rows.push_back(offset + i);
      }
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    try {
      const auto model = fit_model(family, panel, fit_rows, hyper, ctx);
      for (int i = fold_begin; i < fold_end; ++i) {
        const int row = offset + i;
        const double err = model->predict_row(panel, row) - panel.target[row];
        total += err * err;
        ++count;
      }
    } catch (const std::exception& e) {
      throw Error("cv fold " + std::to_string(f + 1) + ": " + e.what());
    }
  }
  if (count == 0) throw ConfigError("cv: no validation points");
  return total / count;
}

namespace {

// Unit-interval Halton sequence, one prime base per dimension.
double halton(int index, int base) {
  double f = 1.0, value = 0.0;
  int i = index;
  while (i > 0) {
    f /= base;
    value += f * (i % base);
    i /= base;
  }
  return value;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};

struct ParamCodec {
  const SearchSpace& space;

  double denorm_one(double u, const HyperRange& hp) const {
    u = std::clamp(u, 0.0, 1.0);
    double v;
    if (hp.log_scale) {
      v = std::exp(std::log(hp.lower) + u * (std::log(hp.upper) - std::log(hp.lower)));
    } else {
      v = hp.lower + u * (hp.upper - hp.lower);
    }
    if (hp.integer) v = std::clamp(std::round(v), hp.lower, hp.upper);
    return v;
  }

  HyperParams denorm(const Eigen::VectorXd& u) const {
    HyperParams out;
    for (std::size_t d = 0; d < space.params.size(); ++d) {
      out[space.params[d].name] = denorm_one(u[static_cast<int>(d)], space.params[d]);
    }
    return out;
  }
};

double matern52(double dist, double lengthscale) {
  const double a = std::sqrt(5.0) * dist / lengthscale;
  return (1.0 + a + a * a / 3.0) * std::exp(-a);
}

struct Surrogate {
  Eigen::MatrixXd points; // m x d
  Eigen::VectorXd values; // standardized losses
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  double lengthscale = 0.3;

  static double log_marginal(const Eigen::MatrixXd& k, const Eigen::VectorXd& z,
                             Eigen::LLT<Eigen::MatrixXd>& llt_out, Eigen::VectorXd& alpha_out) {
    llt_out.compute(k);
    if (llt_out.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    alpha_out = llt_out.solve(z);
    double log_det = 0.0;
    for (int i = 0; i < k.rows(); ++i) log_det += 2.0 * std::log(llt_out.matrixL()(i, i));
    return -0.5 * z.dot(alpha_out) - 0.5 * log_det;
  }

  void fit(const Eigen::MatrixXd& pts, const Eigen::VectorXd& z) {
    points = pts;
    values = z;
    const int m = static_cast<int>(pts.rows());
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double ell : {0.1, 0.2, 0.3, 0.5, 1.0}) {
      Eigen::MatrixXd k(m, m);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j <= i; ++j) {
          const double v = matern52((pts.row(i) - pts.row(j)).norm(), ell);
          k(i, j) = v;
          k(j, i) = v;
        }
        k(i, i) += 1e-6; // observation noise jitter
      }
      Eigen::LLT<Eigen::MatrixXd> trial_llt;
      Eigen::VectorXd trial_alpha;
      const double ll = log_marginal(k, z, trial_llt, trial_alpha);
      if (ll > best_ll) {
        best_ll = ll;
        lengthscale = ell;
        llt = trial_llt;
        alpha = trial_alpha;
      }
    }
  }

  void predict(const Eigen::VectorXd& x, double& mean, double& sd) const {
    const int m = static_cast<int>(points.rows());
    Eigen::VectorXd kx(m);
    for (int i = 0; i < m; ++i) kx[i] = matern52((points.row(i).transpose() - x).norm(), lengthscale);
    mean = kx.dot(alpha);
    const double var = 1.0 + 1e-6 - kx.dot(llt.solve(kx));
    sd = std::sqrt(std::max(var, 1e-12));
  }
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

double expected_improvement(double best, double mean, double sd) {
  if (sd < 1e-12) return std::max(best - mean, 0.0);
  const double u = (best - mean) / sd;
  return (best - mean) * normal_cdf(u) + sd * normal_pdf(u);
}

std::string param_key(const HyperParams& params) {
  std::string key;
  for (const auto& [name, value] : params) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s=%.12g;", name.c_str(), value);
    key += buf;
  }
  return key;
}

} // namespace

TuneResult bayes_optimize_fn(const Objective& objective, const SearchSpace& space, int budget,
                             std::uint64_t seed) {
  space.validate();
  const int d = static_cast<int>(space.params.size());
  if (d > static_cast<int>(sizeof(kPrimes) / sizeof(kPrimes[0]))) {
    throw ConfigError("bayes_optimize: too many hyperparameters");
  }
  const int n_init = std::min(8, budget);
  if (budget < 1 || n_init < 1) throw ConfigError("bayes_optimize: budget must be >= 1");

  const ParamCodec codec{space};
  TuneResult result;
  result.best_cv = std::numeric_limits<double>::infinity();

  std::vector<Eigen::VectorXd> evaluated_points;
  std::set<std::string> evaluated_keys;

  auto evaluate = [&](const Eigen::VectorXd& u, int iteration) {
    const HyperParams params = codec.denorm(u);
    double value = std::numeric_limits<double>::infinity();
    try {
      value = objective(params);
      if (!std::isfinite(value)) value = std::numeric_limits<double>::infinity();
    } catch (const std::exception&) {
      // recorded as +inf in the trace
    }
    evaluated_points.push_back(u);
    evaluated_keys.insert(param_key(params));
    const bool improved = value < result.best_cv;
    if (improved) {
      result.best_cv = value;
      result.best = params;
    }
    result.trace.push_back({iteration, params, value, improved});
  };

  // Quasi-random initial design, offset derived from the seed.
  const int skip = static_cast<int>(derive_seed(seed, 1) % 509) + 1;
  for (int i = 0; i < n_init; ++i) {
    Eigen::VectorXd u(d);
    for (int k = 0; k < d; ++k) u[k] = halton(skip + i, kPrimes[k]);
    evaluate(u, static_cast<int>(result.trace.size()) + 1);
  }

  for (int iter = n_init; iter < budget; ++iter) {
    // Standardize finite losses for the surrogate; failures count as worst.
    const int m = static_cast<int>(result.trace.size());
    std::vector<double> finite;
    for (const auto& entry : result.trace) {
      if (std::isfinite(entry.cv)) finite.push_back(entry.cv);
    }

    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(iter)));
    Eigen::VectorXd proposal(d);

    if (finite.empty()) {
      for (int k = 0; k < d; ++k) proposal[k] = rng.uniform01();
    } else {
      double mean = 0.0;
      for (double v : finite) mean += v;
      mean /= static_cast<double>(finite.size());
      double var = 0.0;
      for (double v : finite) var += (v - mean) * (v - mean);
      const double sd = std::max(std::sqrt(var / finite.size()), 1e-12);
      const double worst = *std::max_element(finite.begin(), finite.end()) + 3.0 * sd;

      Eigen::MatrixXd pts(m, d);
      Eigen::VectorXd z(m);
      for (int i = 0; i < m; ++i) {
        pts.row(i) = evaluated_points[i].transpose();
        const double v = std::isfinite(result.trace[i].cv) ? result.trace[i].cv : worst;
        z[i] = (v - mean) / sd;
      }
      Surrogate gp;
      gp.fit(pts, z);

      const double best_z = z.minCoeff();
      int best_idx = 0;
      z.minCoeff(&best_idx);

      double best_ei = -1.0;
      Eigen::VectorXd best_u = Eigen::VectorXd::Zero(d);
      bool have_candidate = false;
      const int n_candidates = 1024 + 64;
      for (int c = 0; c < n_candidates; ++c) {
        Eigen::VectorXd u(d);
        if (c < 1024) {
          for (int k = 0; k < d; ++k) u[k] = rng.uniform01();
        } else {
          for (int k = 0; k < d; ++k) {
            u[k] = std::clamp(pts(best_idx, k) + 0.05 * rng.normal(), 0.0, 1.0);
          }
        }
        if (evaluated_keys.count(param_key(codec.denorm(u)))) continue; // re-sample duplicates
        double mu, sigma;
        gp.predict(u, mu, sigma);
        const double ei = expected_improvement(best_z, mu, sigma);
        if (!have_candidate || ei > best_ei) {
          have_candidate = true;
          best_ei = ei;
          best_u = u;
        }
      }
      if (!have_candidate) {
        // Every candidate mapped to an already-evaluated configuration
        // (tiny integer spaces); fall back to a fresh random point.
        for (int k = 0; k < d; ++k) best_u[k] = rng.uniform01();
      }
      proposal = best_u;
    }
    evaluate(proposal, static_cast<int>(result.trace.size()) + 1);
  }

  if (!std::isfinite(result.best_cv)) {
    throw OptimizationFailedError("bayes_optimize: all " + std::to_string(budget) +
                                  " evaluations failed");
  }
  return result;
}

TuneResult bayes_optimize(const std::string& family, const SearchSpace& space,
                          const MonthlyPanel& panel, const CvPlan& plan, int budget,
                          std::uint64_t seed, const ModelContext& ctx) {
  return bayes_optimize_fn(
      [&](const HyperParams& params) { return cv_mse(family, params, panel, plan, ctx); },
      space, budget, seed);
}

SearchSpace default_search_space(const std::string& family) {
  SearchSpace space;
  if (family == "lasso") {
    space.params = {{"lambda", 0.001, 0.009, true, false}};
  } else if (family == "ridge") {
    space.params = {{"lambda", 0.01, 0.09, true, false}};
  } else if (family == "elastic_net") {
    space.params = {{"alpha", 0.1, 0.9, false, false}, {"lambda", 0.01, 0.09, true, false}};
  } else if (family == "adaptive_lasso") {
    space.params = {{"lambda", 0.01, 0.09, true, false}, {"gamma", 0.1, 0.9, false, false}};
  } else if (family == "random_forest") {
    space.params = {{"n_trees", 1, 400, false, true}};
  } else if (family == "gbm") {
    space.params = {{"n_trees", 1, 5000, true, true}, {"shrinkage", 0.001, 0.009, true, false}};
  } else {
    throw ConfigError("no default search space for family '" + family + "'");
  }
  return space;
}

void write_trace_csv(const TuneResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  // union of hyperparameter names, stable order
  std::set<std::string> names;
  for (const auto& entry : result.trace) {
    for (const auto& [name, value] : entry.params) names.insert(name);
  }
  out << "iteration";
  for (const auto& name : names) out << "," << name;
  out << ",cv_mse,incumbent\n";
  char buf[48];
  for (const auto& entry : result.trace) {
    out << entry.iteration;
    for (const auto& name : names) {
      out << ",";
      if (auto it = entry.params.find(name); it != entry.params.end()) {
        std::snprintf(buf, sizeof(buf), "%.12g", it->second);
        out << buf;
      }
    }
    std::snprintf(buf, sizeof(buf), "%.12g", entry.cv);
    out << "," << buf << "," << (entry.incumbent ? 1 : 0) << "\n";
  }
}

} // namespace nowcast
