#include "nowcast/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "nowcast/errors.hpp"
#include "nowcast/parallel.hpp"
#include "nowcast/rng.hpp"

namespace nowcast {

double RegressionTree::predict(const Eigen::VectorXd& x) const {
  if (nodes.empty()) throw EmptyModelError("tree: no nodes");
  int idx = 0;
  for (;;) {
    const TreeNode& node = nodes[idx];
    if (node.feature < 0) return node.value;
    const double v = x[node.feature];
    if (std::isnan(v)) {
      idx = node.missing_left ? node.left : node.right;
    } else {
      idx = v <= node.threshold ? node.left : node.right;
    }
  }
}

namespace {

struct SplitResult {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double child_sse = 0.0;
};

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  const TreeConfig& config;
  Rng* rng;
  std::vector<TreeNode> nodes;

  int build(std::vector<int>& rows, int depth) {
    const int node_idx = static_cast<int>(nodes.size());
    nodes.emplace_back();

    double sum = 0.0;
    for (int r : rows) sum += y[r];
    const double mean = sum / static_cast<double>(rows.size());
    double sse = 0.0;
    for (int r : rows) sse += (y[r] - mean) * (y[r] - mean);

    nodes[node_idx].value = mean;

    const bool depth_ok = config.max_depth < 0 || depth < config.max_depth;
    if (!depth_ok || static_cast<int>(rows.size()) < 2 * config.min_leaf_size || sse <= 0.0) {
      return node_idx;
    }

    const SplitResult split = find_split(rows);
    if (!split.found) return node_idx;

    std::vector<int> left_rows, right_rows, missing_rows;
    for (int r : rows) {
      const double v = X(r, split.feature);
      if (std::isnan(v)) {
        missing_rows.push_back(r);
      } else if (v <= split.threshold) {
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
      }
    }
    const bool missing_left = left_rows.size() >= right_rows.size();
    auto& recipient = missing_left ? left_rows : right_rows;
    recipient.insert(recipient.end(), missing_rows.begin(), missing_rows.end());

    nodes[node_idx].feature = split.feature;
    nodes[node_idx].threshold = split.threshold;
    nodes[node_idx].missing_left = missing_left;

    rows.clear();
    rows.shrink_to_fit();
    const int left_idx = build(left_rows, depth + 1);
    nodes[node_idx].left = left_idx;
    const int right_idx = build(right_rows, depth + 1);
    nodes[node_idx].right = right_idx;
    return node_idx;
  }

  SplitResult find_split(const std::vector<int>& rows) {
    const int p = static_cast<int>(X.cols());
    std::vector<int> candidates;
    if (rng != nullptr && config.mtry > 0 && config.mtry < p) {
      // Partial Fisher-Yates; candidates sorted so ties break on feature index.
      std::vector<int> pool(p);
      std::iota(pool.begin(), pool.end(), 0);
      for (int k = 0; k < config.mtry; ++k) {
        const int pick = k + static_cast<int>(rng->uniform_below(p - k));
        std::swap(pool[k], pool[pick]);
      }
      candidates.assign(pool.begin(), pool.begin() + config.mtry);
      std::sort(candidates.begin(), candidates.end());
    } else {
      candidates.resize(p);
      std::iota(candidates.begin(), candidates.end(), 0);
    }

    SplitResult best;
    std::vector<std::pair<double, double>> observed; // (x value, y)
    for (int feature : candidates) {
      observed.clear();
      for (int r : rows) {
        const double v = X(r, feature);
        if (!std::isnan(v)) observed.emplace_back(v, y[r]);
      }
      const int m = static_cast<int>(observed.size());
      if (m < 2 * config.min_leaf_size) continue;
      std::sort(observed.begin(), observed.end());

      double total_sum = 0.0, total_sq = 0.0;
      for (const auto& [v, t] : observed) {
        total_sum += t;
        total_sq += t * t;
      }
      const double parent_sse = total_sq - total_sum * total_sum / m;

      double left_sum = 0.0, left_sq = 0.0;
      for (int k = 1; k <= m - config.min_leaf_size; ++k) {
        left_sum += observed[k - 1].second;
        left_sq += observed[k - 1].second * observed[k - 1].second;
        if (k < config.min_leaf_size) continue;
        if (observed[k - 1].first >= observed[k].first) continue; // no cut between equal values
        const double right_sum = total_sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double child_sse = (left_sq - left_sum * left_sum / k) +
                                 (right_sq - right_sum * right_sum / (m - k));
        if (child_sse >= parent_sse) continue; // zero-gain split
        if (!best.found || child_sse < best.child_sse) {
          best.found = true;
          best.feature = feature;
          best.threshold = (observed[k - 1].first + observed[k].first) / 2.0;
          best.child_sse = child_sse;
        }
      }
    }
    return best;
  }
};

} // namespace

RegressionTree fit_regression_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<int>& rows, const TreeConfig& config,
                                   Rng* rng) {
  if (rows.empty()) throw DimensionError("tree: no training rows");
  if (config.min_leaf_size < 1) throw ConfigError("tree: min_leaf_size must be >= 1");

  TreeBuilder builder{X, y, config, rng, {}};
  std::vector<int> root_rows = rows;
  builder.build(root_rows, 0);

  RegressionTree tree;
  tree.nodes = std::move(builder.nodes);
  tree.max_depth = config.max_depth;
  tree.min_leaf_size = config.min_leaf_size;
  return tree;
}

ForestModel fit_random_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const ForestConfig& config) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (y.size() != n) throw DimensionError("forest: rows(X) != len(y)");
  if (config.n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
  if (config.mtry > p) throw ConfigError("forest: mtry exceeds feature count");
  if (n < 2 * config.min_leaf_size) throw ConfigError("forest: too few rows for min_leaf_size");

  ForestModel model;
  model.config = config;
  model.config.mtry = config.mtry > 0 ? config.mtry : std::max(1, p / 3);

  const TreeConfig tree_config{config.max_depth, config.min_leaf_size, model.config.mtry};
  model.trees.resize(config.n_trees);
  std::vector<std::vector<std::uint8_t>> in_bag(config.n_trees);

  parallel_for(
      config.n_trees,
      [&](int z) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(z)));
        std::vector<int> rows;
        rows.reserve(n);
        in_bag[z].assign(n, 0);
        if (config.bootstrap) {
          for (int i = 0; i < n; ++i) {
            const int r = static_cast<int>(rng.uniform_below(n));
            rows.push_back(r);
            in_bag[z][r] = 1;
          }
        } else {
          for (int i = 0; i < n; ++i) {
            rows.push_back(i);
            in_bag[z][i] = 1;
          }
        }
        model.trees[z] = fit_regression_tree(X, y, rows, tree_config, &rng);
      },
      config.n_threads);

  // Out-of-bag error, reduced in fixed tree order.
  double total = 0.0;
  int counted = 0;
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    int k = 0;
    for (int z = 0; z < config.n_trees; ++z) {
      if (!in_bag[z][i]) {
        sum += model.trees[z].predict(X.row(i));
        ++k;
      }
    }
    if (k > 0) {
      const double err = sum / k - y[i];
      total += err * err;
      ++counted;
    }
  }
  if (counted > 0) model.oob_mse = total / counted;
  return model;
}

BoostedModel fit_gbm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbmConfig& config) {
  const int n = static_cast<int>(X.rows());
  if (y.size() != n) throw DimensionError("gbm: rows(X) != len(y)");
  if (!(config.shrinkage > 0.0 && config.shrinkage <= 1.0)) {
    throw ConfigError("gbm: shrinkage must lie in (0, 1]");
  }
  if (config.n_trees < 0) throw ConfigError("gbm: n_trees must be >= 0");
  if (n < 1) throw DimensionError("gbm: empty training set");

  BoostedModel model;
  model.config = config;
  model.initial_value = y.mean();

  Eigen::VectorXd current = Eigen::VectorXd::Constant(n, model.initial_value);
  model.training_mse_path.push_back((y - current).squaredNorm() / n);

  std::vector<int> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  const TreeConfig tree_config{config.tree_depth, config.min_leaf_size, -1};

  for (int z = 0; z < config.n_trees; ++z) {
    const Eigen::VectorXd residual = y - current;
    RegressionTree tree = fit_regression_tree(X, residual, all_rows, tree_config, nullptr);
    for (int i = 0; i < n; ++i) current[i] += config.shrinkage * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));
    model.training_mse_path.push_back((y - current).squaredNorm() / n);
  }
  return model;
}

double predict_forest(const ForestModel& model, const Eigen::VectorXd& x) {
  if (model.trees.empty()) throw EmptyModelError("forest: no trees");
  double sum = 0.0;
  for (const auto& tree : model.trees) sum += tree.predict(x);
  return sum / static_cast<double>(model.trees.size());
}

double predict_boosted(const BoostedModel& model, const Eigen::VectorXd& x) {
  double out = model.initial_value;
  for (const auto& tree : model.trees) out += model.config.shrinkage * tree.predict(x);
  return out;
}

namespace {

nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"missing_left", n.missing_left},
                     {"value", n.value}});
  }
  return nodes;
}

} // namespace

std::string forest_to_json(const ForestModel& model) {
  nlohmann::json j;
  j["n_trees"] = model.config.n_trees;
  j["mtry"] = model.config.mtry;
  j["min_leaf_size"] = model.config.min_leaf_size;
  j["max_depth"] = model.config.max_depth;
  j["bootstrap"] = model.config.bootstrap;
  j["seed"] = model.config.seed;
  j["oob_mse"] = model.oob_mse;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& tree : model.trees) trees.push_back(tree_to_json(tree));
  return j.dump();
}

std::string boosted_to_json(const BoostedModel& model) {
  nlohmann::json j;
  j["initial_value"] = model.initial_value;
  j["shrinkage"] = model.config.shrinkage;
  j["tree_depth"] = model.config.tree_depth;
  j["n_trees"] = model.config.n_trees;
  j["training_mse_path"] = model.training_mse_path;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& tree : model.trees) trees.push_back(tree_to_json(tree));
  return j.dump();
}

} // namespace nowcast
