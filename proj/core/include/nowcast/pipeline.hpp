#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nowcast/models.hpp"
#include "nowcast/tuning.hpp"

namespace nowcast {

struct SyntheticConfig {
  int n_months = 185;
  int p = 91;
  int r_factors = 2;
  double nonlinear_share = 0.35;
};

struct PanelSourceConfig {
  std::string source = "synthetic"; // "synthetic" or "manifest"
  std::string manifest_path;
  SyntheticConfig synthetic;
  std::optional<Month> start_month;
  std::optional<Month> train_end; // synthetic mode derives defaults when unset
  std::optional<Month> test_end;
};

struct SelectionStageConfig {
  bool enabled = true;
  int n_iterations = 50000;
  int burn_in = 1000;
  double prior_inclusion = 0.5;
  int top_k = 19;
};

struct TuningStageConfig {
  int budget = 16;
  int folds = 5;
};

struct ModelSpec {
  std::string id;     // one of ar, ridge, lasso, elastic_net, adaptive_lasso,
                      // random_forest, gbm, dfm_full, dfm_best,
                      // dfm_structured, dfm_electricity
  std::string family; // derived from the id
  std::optional<SearchSpace> space; // overrides the default search space
  HyperParams fixed;  // when non-empty, tuning is skipped for this model
  DfmSettings dfm;
  std::vector<std::string> series; // dfm_electricity column list
  std::optional<bool> refit_each_month;
};

struct EvaluationStageConfig {
  bool refit_each_month = true; // regression families; dfm defaults to false
  std::string consistency_benchmark = "dfm_electricity";
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  PanelSourceConfig panel;
  SelectionStageConfig selection;
  TuningStageConfig tuning;
  std::vector<ModelSpec> models;
  EvaluationStageConfig evaluation;
};

PipelineConfig load_pipeline_config(const std::string& path);

// Stages in order: ingest, select, tune, forecast, evaluate, report. A full
// run executes them all, skipping stages whose inputs are unchanged (content
// fingerprints in stamp files). With stage_filter only that stage runs,
// forced, against existing upstream artifacts. Errors carry the stage name.
void run_pipeline(const PipelineConfig& config,
                  const std::optional<std::string>& stage_filter = std::nullopt);

// Renders table3.csv, table4.csv, inclusion.csv, and plotdata_<model>.csv
// from the artifacts in out_dir. Fails with the name of the missing stage
// when evaluation artifacts are absent.
void emit_report(const std::string& out_dir);

const std::vector<std::string>& pipeline_stages();

// Quick built-in checks used by the CLI selftest command.
int run_selftest();

} // namespace nowcast
