#include "nowcast/bayes_select.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nowcast/errors.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

void SelectionConfig::validate() const {
  if (n_iterations < 1) throw ConfigError("selection: n_iterations must be >= 1");
  if (burn_in < 0 || burn_in >= n_iterations) {
    throw ConfigError("selection: burn_in must lie in [0, n_iterations)");
  }
  if (!(prior_inclusion > 0.0 && prior_inclusion < 1.0)) {
    throw ConfigError("selection: prior inclusion probability must lie in (0, 1)");
  }
  if (!(noise_shape > 0.0) || !(noise_scale > 0.0)) {
    throw ConfigError("selection: noise prior parameters must be positive");
  }
}

namespace {

struct Problem {
  Eigen::MatrixXd gram; // X'X
  Eigen::VectorXd xty;  // X'y (y centered)
  Eigen::MatrixXd x;    // standardized design
  Eigen::VectorXd y;    // centered target
  double yty = 0.0;
  double g = 0.0;
  double log_prior_odds = 0.0; // ln(pi / (1 - pi))
  double a0 = 0.0, b0 = 0.0;
  int n = 0, p = 0;
};

Problem make_problem(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const SelectionConfig& config) {
  if (X.rows() != y.size()) throw DimensionError("selection: rows(X) != len(y)");
  if (!X.allFinite() || !y.allFinite()) {
    throw NumericInputError("selection: design and target must be gap-free and finite");
  }
  Problem prob;
  prob.n = static_cast<int>(X.rows());
  prob.p = static_cast<int>(X.cols());
  prob.x = X;
  prob.y = y.array() - y.mean(); // intercept handled by centering
  prob.gram = X.transpose() * X;
  prob.xty = X.transpose() * prob.y;
  prob.yty = prob.y.squaredNorm();
  prob.g = config.g > 0.0 ? config.g : static_cast<double>(prob.n);
  prob.log_prior_odds = std::log(config.prior_inclusion / (1.0 - config.prior_inclusion));
  prob.a0 = config.noise_shape;
  prob.b0 = config.noise_scale;
  return prob;
}

// log p(y | gamma) + log p(gamma) up to terms constant across models.
// S = y'y - g/(1+g) * y'P y where P projects onto the selected columns.
double log_score(const Problem& prob, double y_proj_sq, int q) {
  const double shrink = prob.g / (1.0 + prob.g);
  const double s = prob.yty - shrink * y_proj_sq;
  return -0.5 * q * std::log1p(prob.g) -
         (prob.a0 + 0.5 * prob.n) * std::log(prob.b0 + 0.5 * s) +
         q * prob.log_prior_odds;
}

// Quadratic form y'P y via the Gram matrix of the selected columns. A tiny
// ridge keeps the solve defined when columns are duplicated.
double proj_quadratic_gram(const Problem& prob, const std::vector<int>& subset) {
  const int q = static_cast<int>(subset.size());
  if (q == 0) return 0.0;
  Eigen::MatrixXd gram_sub(q, q);
  Eigen::VectorXd v(q);
  for (int a = 0; a < q; ++a) {
    v[a] = prob.xty[subset[a]];
    for (int b = 0; b < q; ++b) gram_sub(a, b) = prob.gram(subset[a], subset[b]);
  }
  gram_sub.diagonal().array() += 1e-9 * static_cast<double>(prob.n);
  return v.dot(gram_sub.ldlt().solve(v));
}

// Independent route for the enumeration oracle: squared norm of the
// orthogonal projection of y onto the span of the selected columns.
double proj_quadratic_qr(const Problem& prob, std::uint32_t mask) {
  int q = 0;
  for (int j = 0; j < prob.p; ++j) q += (mask >> j) & 1u;
  if (q == 0) return 0.0;
  Eigen::MatrixXd x_sub(prob.n, q);
  int col = 0;
  for (int j = 0; j < prob.p; ++j) {
    if ((mask >> j) & 1u) x_sub.col(col++) = prob.x.col(j);
  }
  const Eigen::VectorXd coef =
      x_sub.completeOrthogonalDecomposition().solve(prob.y);
  return prob.y.dot(x_sub * coef);
}

InclusionReport finish_report(const Problem&, std::vector<double> probabilities,
                              const std::vector<std::string>& ids,
                              const std::vector<Category>& categories) {
  InclusionReport report;
  report.probabilities = std::move(probabilities);
  report.column_ids = ids;
  report.column_categories = categories;
  for (std::size_t j = 0; j < report.probabilities.size(); ++j) {
    report.ranking.push_back({ids[j], categories[j], report.probabilities[j]});
  }
  std::sort(report.ranking.begin(), report.ranking.end(),
            [](const InclusionEntry& a, const InclusionEntry& b) {
              if (a.probability != b.probability) return a.probability > b.probability;
              return a.id < b.id;
            });
  return report;
}

} // namespace

InclusionReport gibbs_spike_slab(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::vector<std::string>& ids,
                                 const std::vector<Category>& categories,
                                 const SelectionConfig& config) {
  config.validate();
  const Problem prob = make_problem(X, y, config);
  if (static_cast<int>(ids.size()) != prob.p || static_cast<int>(categories.size()) != prob.p) {
    throw DimensionError("selection: metadata length mismatch");
  }

  Rng rng(derive_seed(config.seed, 0xB5E5));
  std::vector<std::uint8_t> included(prob.p, 0);
  for (int j = 0; j < prob.p; ++j) included[j] = rng.bernoulli(config.prior_inclusion) ? 1 : 0;

  auto subset_of = [&](int skip, bool with_skip) {
    std::vector<int> subset;
    subset.reserve(prob.p);
    for (int j = 0; j < prob.p; ++j) {
      if (j == skip ? with_skip : included[j] != 0) subset.push_back(j);
    }
    return subset;
  };

  std::vector<long> counts(prob.p, 0);
  int q = 0;
  for (int j = 0; j < prob.p; ++j) q += included[j];
  double current = log_score(prob, proj_quadratic_gram(prob, subset_of(-1, false)), q);

  for (int iter = 0; iter < config.n_iterations; ++iter) {
    for (int j = 0; j < prob.p; ++j) {
      const bool now = included[j] != 0;
      const int q_flip = q + (now ? -1 : 1);
      const double flipped =
          log_score(prob, proj_quadratic_gram(prob, subset_of(j, !now)), q_flip);
      // p(gamma_j flips) from the two collapsed scores.
      const double p_flip = 1.0 / (1.0 + std::exp(current - flipped));
      if (rng.uniform01() < p_flip) {
        included[j] = now ? 0 : 1;
        q = q_flip;
        current = flipped;
      }
    }
    if (iter >= config.burn_in) {
      for (int j = 0; j < prob.p; ++j) counts[j] += included[j];
    }
  }

  const double retained = static_cast<double>(config.n_iterations - config.burn_in);
  std::vector<double> probabilities(prob.p);
  for (int j = 0; j < prob.p; ++j) probabilities[j] = counts[j] / retained;
  return finish_report(prob, std::move(probabilities), ids, categories);
}

InclusionReport exact_posterior_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<std::string>& ids,
                                            const std::vector<Category>& categories,
                                            const SelectionConfig& config) {
  config.validate();
  const Problem prob = make_problem(X, y, config);
  if (prob.p > 12) throw ConfigError("enumeration: p must be <= 12");
  if (static_cast<int>(ids.size()) != prob.p || static_cast<int>(categories.size()) != prob.p) {
    throw DimensionError("selection: metadata length mismatch");
  }

  const std::uint32_t n_models = 1u << prob.p;
  std::vector<double> scores(n_models);
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < n_models; ++mask) {
    int q = 0;
    for (int j = 0; j < prob.p; ++j) q += (mask >> j) & 1u;
    scores[mask] = log_score(prob, proj_quadratic_qr(prob, mask), q);
    max_score = std::max(max_score, scores[mask]);
  }

  double total = 0.0;
  std::vector<double> numerators(prob.p, 0.0);
  for (std::uint32_t mask = 0; mask < n_models; ++mask) {
    const double w = std::exp(scores[mask] - max_score);
    total += w;
    for (int j = 0; j < prob.p; ++j) {
      if ((mask >> j) & 1u) numerators[j] += w;
    }
  }

  std::vector<double> probabilities(prob.p);
  for (int j = 0; j < prob.p; ++j) probabilities[j] = numerators[j] / total;
  return finish_report(prob, std::move(probabilities), ids, categories);
}

std::vector<std::string> top_k_variables(const InclusionReport& report, int k) {
  if (k < 0 || k > static_cast<int>(report.ranking.size())) {
    throw ConfigError("top_k: k must lie in [0, p]");
  }
  std::vector<std::string> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back(report.ranking[i].id);
  return out;
}

void write_inclusion_csv(const InclusionReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "id,category,probability\n";
  char buf[64];
  for (const auto& entry : report.ranking) {
    std::snprintf(buf, sizeof(buf), "%.6f", entry.probability);
    out << entry.id << "," << to_string(entry.category) << "," << buf << "\n";
  }
}

} // namespace nowcast
