#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nowcast/calendar.hpp"
#include "nowcast/models.hpp"

namespace nowcast {

struct HyperRange {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool log_scale = false;
  bool integer = false;
};

struct SearchSpace {
  std::vector<HyperRange> params;
  void validate() const;
};

// k contiguous, chronologically ordered blocks partitioning the training
// window; block sizes differ by at most one with the remainder going to the
// earliest folds.
struct CvPlan {
  Month window_start;
  std::vector<std::pair<int, int>> folds; // [begin, end) offsets from window_start
  int k() const { return static_cast<int>(folds.size()); }
};

CvPlan make_time_folds(Month first, Month last, int k);

// Mean squared validation error over all held-out points: each fold is
// predicted by a model fit on the remaining folds. No square root.
double cv_mse(const std::string& family, const HyperParams& hyper, const MonthlyPanel& panel,
              const CvPlan& plan, const ModelContext& ctx = {});

struct TuneTraceEntry {
  int iteration = 0;
  HyperParams params;
  double cv = 0.0;
  bool incumbent = false;
};

struct TuneResult {
  HyperParams best;
  double best_cv = 0.0;
  std::vector<TuneTraceEntry> trace;
};

// Sequential Bayesian optimization: Gaussian-process surrogate (Matern-5/2
// on the unit-normalized space, observation jitter 1e-6), expected-
// improvement acquisition, quasi-random initial design of up to 8 points.
// Deterministic in seed. Failed evaluations are recorded as +inf;
// OptimizationFailedError is raised only when every evaluation failed.
using Objective = std::function<double(const HyperParams&)>;
TuneResult bayes_optimize_fn(const Objective& objective, const SearchSpace& space, int budget,
                             std::uint64_t seed);

// Convenience wrapper minimizing cv_mse for a model family.
TuneResult bayes_optimize(const std::string& family, const SearchSpace& space,
                          const MonthlyPanel& panel, const CvPlan& plan, int budget,
                          std::uint64_t seed, const ModelContext& ctx = {});

// Search spaces as published for the six tunable families; callers may
// override since some reported optima fall outside these ranges.
SearchSpace default_search_space(const std::string& family);

void write_trace_csv(const TuneResult& result, const std::string& path);

} // namespace nowcast
