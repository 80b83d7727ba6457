#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nowcast/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monthly GDP nowcasting pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stage;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    cmd->add_option("--config", config_path, "pipeline configuration file")
        ->required(config_required);
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
      seed_set = true;
    });
  };

  CLI::App* run = app.add_subcommand("run", "execute the pipeline stages");
  add_common(run, true);
  run->add_option("--stage", stage, "run only this stage (ingest|select|tune|forecast|evaluate|report)");

  CLI::App* report = app.add_subcommand("report", "render report files from existing artifacts");
  add_common(report, false);

  CLI::App* selftest = app.add_subcommand("selftest", "run built-in sanity checks");
  (void)selftest;

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) {
      return nowcast::run_selftest();
    }
    if (report->parsed()) {
      std::string dir = out_dir;
      if (dir.empty()) {
        if (config_path.empty()) {
          std::fprintf(stderr, "error: report needs --out or --config\n");
          return 2;
        }
        dir = nowcast::load_pipeline_config(config_path).out_dir;
      }
      nowcast::emit_report(dir);
      std::printf("report written to %s\n", dir.c_str());
      return 0;
    }
    // run
    nowcast::PipelineConfig config = nowcast::load_pipeline_config(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed_set) config.seed = seed;
    std::optional<std::string> stage_filter;
    if (!stage.empty()) stage_filter = stage;
    nowcast::run_pipeline(config, stage_filter);
    std::printf("pipeline complete; artifacts in %s\n", config.out_dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
