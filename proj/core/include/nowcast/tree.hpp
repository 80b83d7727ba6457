#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace nowcast {

class Rng;

// One node of a binary regression tree. Internal nodes test
// x[feature] <= threshold; rows with a missing (NaN) split feature follow
// missing_left, which points at the child that received more training rows.
struct TreeNode {
  int feature = -1; // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool missing_left = true;
  double value = 0.0; // leaf prediction: mean of training targets routed here
};

struct TreeConfig {
  int max_depth = -1;    // -1 = unlimited; 0 = root-only stump
  int min_leaf_size = 5; // minimum observed rows per child
  int mtry = -1;         // features sampled per split; -1 = all
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  int max_depth = -1;
  int min_leaf_size = 5;

  double predict(const Eigen::VectorXd& x) const;
};

// Grows a tree on rows `rows` of X. Split search is exhaustive over sorted
// unique values of each candidate feature with thresholds at midpoints; ties
// break toward the lowest feature index, then the lowest threshold. When rng
// is non-null and config.mtry < p, each split samples mtry candidate
// features without replacement from that stream.
RegressionTree fit_regression_tree(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   const std::vector<int>& rows, const TreeConfig& config,
                                   Rng* rng = nullptr);

struct ForestConfig {
  int n_trees = 100;
  int mtry = -1; // -1 = max(1, p/3)
  int min_leaf_size = 5;
  int max_depth = -1;
  bool bootstrap = true; // diagnostic mode trains each tree on all rows when false
  std::uint64_t seed = 0;
  int n_threads = 0; // 0 = NOWCAST_THREADS / hardware
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  ForestConfig config;
  double oob_mse = std::numeric_limits<double>::quiet_NaN();
};

// Bagged forest. Tree z draws its bootstrap resample and per-split feature
// subsets from a stream derived from (seed, z), so the result is identical
// for any thread count and already-built trees never change when n_trees
// grows.
ForestModel fit_random_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const ForestConfig& config);

struct GbmConfig {
  int n_trees = 100;
  double shrinkage = 0.1; // in (0, 1]
  int tree_depth = 3;
  int min_leaf_size = 1;
  std::uint64_t seed = 0; // reserved; stage-wise fitting is deterministic
};

struct BoostedModel {
  double initial_value = 0.0; // training mean of the target
  std::vector<RegressionTree> trees;
  GbmConfig config;
  std::vector<double> training_mse_path; // entry 0 = base model, then per tree
};

// Stage-wise boosting with squared-error loss: each tree fits the current
// residuals and enters scaled by the shrinkage factor.
BoostedModel fit_gbm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbmConfig& config);

double predict_forest(const ForestModel& model, const Eigen::VectorXd& x);
double predict_boosted(const BoostedModel& model, const Eigen::VectorXd& x);

std::string forest_to_json(const ForestModel& model);
std::string boosted_to_json(const BoostedModel& model);

} // namespace nowcast
