#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "nowcast/series.hpp"

namespace nowcast {

// Spike-and-slab settings. The slab is a Zellner g-prior with conjugate
// inverse-gamma noise, so marginal likelihoods are available in closed form
// and indicator updates reduce to marginal-likelihood ratios.
struct SelectionConfig {
  int n_iterations = 50000;
  int burn_in = 1000;
  double prior_inclusion = 0.5; // constant per-variable prior probability
  double g = 0.0;               // slab variance multiplier; <= 0 means g = n
  double noise_shape = 0.01;    // inverse-gamma prior on the noise variance
  double noise_scale = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct InclusionEntry {
  std::string id;
  Category category = Category::structured;
  double probability = 0.0;
};

struct InclusionReport {
  // Per-variable probabilities in the input column order.
  std::vector<double> probabilities;
  std::vector<std::string> column_ids;
  std::vector<Category> column_categories;
  // Sorted descending by probability; ties break by column id.
  std::vector<InclusionEntry> ranking;
};

// Single-chain Gibbs sampler over inclusion indicators on a standardized,
// gap-free design. Probabilities are post-burn-in inclusion frequencies;
// the chain is deterministic in config.seed.
InclusionReport gibbs_spike_slab(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const std::vector<std::string>& ids,
                                 const std::vector<Category>& categories,
                                 const SelectionConfig& config);

// Exact posterior by enumerating all 2^p models (p <= 12) under the same
// priors. Serves as the oracle for the sampler.
InclusionReport exact_posterior_enumeration(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                            const std::vector<std::string>& ids,
                                            const std::vector<Category>& categories,
                                            const SelectionConfig& config);

// First k ids of the ranking.
std::vector<std::string> top_k_variables(const InclusionReport& report, int k);

void write_inclusion_csv(const InclusionReport& report, const std::string& path);

} // namespace nowcast
