#include <benchmark/benchmark.h>

#include "nowcast/bayes_select.hpp"
#include "nowcast/dfm.hpp"
#include "nowcast/linear.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/synthetic.hpp"
#include "nowcast/tree.hpp"

namespace {

nowcast::SyntheticPanel make_panel(int n, int p) {
  return nowcast::generate_synthetic_panel(7, n, p, 2, 0.3);
}

void BM_CoordinateDescent(benchmark::State& state) {
  const auto synth = make_panel(185, static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = synth.panel.filled_design();
  const Eigen::VectorXd y = synth.panel.target;
  nowcast::PenaltySpec spec;
  spec.lambda = 1.0;
  spec.alpha = 1.0;
  for (auto _ : state) {
    auto fit = nowcast::fit_penalized(x, y, spec);
    benchmark::DoNotOptimize(fit.coefficients.data());
  }
}
BENCHMARK(BM_CoordinateDescent)->Arg(16)->Arg(91);

void BM_KalmanSmoother(benchmark::State& state) {
  const int n_series = static_cast<int>(state.range(0));
  const auto synth = make_panel(185, n_series);
  Eigen::MatrixXd data = synth.panel.design.transpose();
  const auto em = nowcast::fit_dfm_em(data, 1, 1, {5, 1e-6});
  for (auto _ : state) {
    auto out = nowcast::kalman_filter_smoother(em.model, data);
    benchmark::DoNotOptimize(out.log_likelihood);
  }
}
BENCHMARK(BM_KalmanSmoother)->Arg(8)->Arg(91);

void BM_RandomForestFit(benchmark::State& state) {
  const auto synth = make_panel(120, 30);
  const Eigen::MatrixXd x = synth.panel.design;
  const Eigen::VectorXd y = synth.panel.target;
  nowcast::ForestConfig config;
  config.n_trees = static_cast<int>(state.range(0));
  config.seed = 11;
  for (auto _ : state) {
    auto model = nowcast::fit_random_forest(x, y, config);
    benchmark::DoNotOptimize(model.oob_mse);
  }
}
BENCHMARK(BM_RandomForestFit)->Arg(50)->Arg(200);

void BM_GibbsSweeps(benchmark::State& state) {
  const auto synth = make_panel(60, static_cast<int>(state.range(0)));
  const int train = synth.panel.train_end_index() + 1;
  const Eigen::MatrixXd x = synth.panel.filled_design().topRows(train);
  const Eigen::VectorXd y = synth.panel.target.head(train);
  nowcast::SelectionConfig config;
  config.n_iterations = 200;
  config.burn_in = 50;
  config.seed = 3;
  for (auto _ : state) {
    auto report = nowcast::gibbs_spike_slab(x, y, synth.panel.column_ids,
                                            synth.panel.column_categories, config);
    benchmark::DoNotOptimize(report.probabilities.data());
  }
}
BENCHMARK(BM_GibbsSweeps)->Arg(8)->Arg(24);

} // namespace

BENCHMARK_MAIN();
