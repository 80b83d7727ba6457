#include "nowcast/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nowcast/bayes_select.hpp"
#include "nowcast/errors.hpp"
#include "nowcast/evaluation.hpp"
#include "nowcast/linear.hpp"
#include "nowcast/parallel.hpp"
#include "nowcast/rng.hpp"
#include "nowcast/synthetic.hpp"

namespace nowcast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kStages = {"ingest", "select",   "tune",
                                          "forecast", "evaluate", "report"};

const std::vector<std::string> kModelIds = {
    "ar",  "ridge",    "lasso",    "elastic_net",    "adaptive_lasso", "random_forest",
    "gbm", "dfm_full", "dfm_best", "dfm_structured", "dfm_electricity"};

const std::vector<std::string> kMlModels = {"ridge",         "lasso",         "elastic_net",
                                            "adaptive_lasso", "random_forest", "gbm"};

std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// All artifact writes go through a temp-then-rename so readers never see a
// partial file.
void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << contents;
  }
  fs::rename(tmp, path);
}

std::string format_fixed(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

bool is_dfm_id(const std::string& id) { return id.rfind("dfm", 0) == 0; }

std::string seed_key(const std::string& model_id) { return model_id; }

std::uint64_t model_seed(std::uint64_t master, int stage_slot, const std::string& model_id) {
  return derive_seed(derive_seed(master, stage_slot), fnv1a(seed_key(model_id)));
}

SearchSpace space_from_json(const json& j) {
  SearchSpace space;
  for (const auto& [name, body] : j.items()) {
    HyperRange hp;
    hp.name = name;
    hp.lower = body.at("lower").get<double>();
    hp.upper = body.at("upper").get<double>();
    hp.log_scale = body.value("scale", "linear") == "log";
    hp.integer = body.value("integer", false);
    space.params.push_back(hp);
  }
  space.validate();
  return space;
}

} // namespace

const std::vector<std::string>& pipeline_stages() { return kStages; }

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }

  PipelineConfig config;
  config.seed = j.value("seed", 0ULL);
  config.out_dir = j.value("out_dir", "out");

  if (j.contains("panel")) {
    const auto& p = j.at("panel");
    config.panel.source = p.value("source", "synthetic");
    if (config.panel.source != "synthetic" && config.panel.source != "manifest") {
      throw ConfigError("panel.source must be 'synthetic' or 'manifest'");
    }
    config.panel.manifest_path = p.value("manifest", "");
    if (p.contains("synthetic")) {
      const auto& s = p.at("synthetic");
      config.panel.synthetic.n_months = s.value("n_months", 185);
      config.panel.synthetic.p = s.value("p", 91);
      config.panel.synthetic.r_factors = s.value("r_factors", 2);
      config.panel.synthetic.nonlinear_share = s.value("nonlinear_share", 0.35);
    }
    if (p.contains("start_month")) {
      config.panel.start_month = Month::parse(p.at("start_month").get<std::string>());
    }
    if (p.contains("train_end")) {
      config.panel.train_end = Month::parse(p.at("train_end").get<std::string>());
    }
    if (p.contains("test_end")) {
      config.panel.test_end = Month::parse(p.at("test_end").get<std::string>());
    }
  }

  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    config.selection.enabled = s.value("enabled", true);
    config.selection.n_iterations = s.value("n_iterations", 50000);
    config.selection.burn_in = s.value("burn_in", 1000);
    config.selection.prior_inclusion = s.value("prior_inclusion", 0.5);
    config.selection.top_k = s.value("top_k", 19);
  }

  if (j.contains("tuning")) {
    config.tuning.budget = j.at("tuning").value("budget", 16);
    config.tuning.folds = j.at("tuning").value("folds", 5);
  }

  if (!j.contains("models")) throw ConfigError("config: no models listed");
  for (const auto& m : j.at("models")) {
    ModelSpec spec;
    spec.id = m.at("id").get<std::string>();
    if (std::find(kModelIds.begin(), kModelIds.end(), spec.id) == kModelIds.end()) {
      throw ConfigError("config: unsupported model id '" + spec.id + "'");
    }
    spec.family = is_dfm_id(spec.id) ? "dfm" : spec.id;
    if (m.contains("space")) spec.space = space_from_json(m.at("space"));
    if (m.contains("hyper")) {
      for (const auto& [name, value] : m.at("hyper").items()) {
        spec.fixed[name] = value.get<double>();
      }
    }
    spec.dfm.r_factors = m.value("r_factors", 1);
    spec.dfm.p_lags = m.value("p_lags", 1);
    spec.dfm.em_max_iter = m.value("em_max_iter", 50);
    spec.dfm.em_tol = m.value("em_tol", 1e-6);
    if (m.contains("series")) spec.series = m.at("series").get<std::vector<std::string>>();
    if (m.contains("refit_each_month")) spec.refit_each_month = m.at("refit_each_month").get<bool>();
    if (spec.id == "dfm_electricity" && spec.series.empty()) {
      throw ConfigError("config: dfm_electricity requires a 'series' list");
    }
    config.models.push_back(std::move(spec));
  }

  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    config.evaluation.refit_each_month = e.value("refit_each_month", true);
    config.evaluation.consistency_benchmark =
        e.value("consistency_benchmark", std::string("dfm_electricity"));
  }
  return config;
}

namespace detail {

class Pipeline {
public:
  Pipeline(const PipelineConfig& config, const std::optional<std::string>& stage_filter)
      : config_(config), out_(config.out_dir), filter_(stage_filter) {
    fs::create_directories(out_);
  }

  void run() {
    if (filter_ &&
        std::find(kStages.begin(), kStages.end(), *filter_) == kStages.end()) {
      throw ConfigError("unknown stage '" + *filter_ + "'");
    }
    run_stage("ingest", [this] { ingest(); });
    run_stage("select", [this] { select(); });
    run_stage("tune", [this] { tune(); });
    run_stage("forecast", [this] { forecast(); });
    run_stage("evaluate", [this] { evaluate(); });
    run_stage("report", [this] { emit_report(out_.string()); });
  }

private:
  template <typename Fn>
  void run_stage(const std::string& name, Fn&& body) {
    if (filter_ && *filter_ != name) return;
    const bool forced = filter_.has_value();
    try {
      const std::string print = fingerprint(name);
      const fs::path stamp = out_ / ("stamp_" + name + ".json");
      if (!forced && fs::exists(stamp)) {
        const json j = json::parse(read_file(stamp));
        if (j.value("fingerprint", "") == print && outputs_exist(name)) return; // cached
      }
      body();
      json j;
      j["fingerprint"] = print;
      write_file_atomic(stamp, j.dump() + "\n");
    } catch (const Error& e) {
      throw Error("stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("stage " + name + ": " + e.what());
    }
  }

  std::string fingerprint(const std::string& stage) const {
    std::uint64_t h = fnv1a(stage);
    h = fnv1a(std::to_string(config_.seed), h);
    auto mix_file = [&](const fs::path& p) {
      if (fs::exists(p)) h = fnv1a(read_file(p), h);
    };
    auto mix = [&](const std::string& s) { h = fnv1a(s, h); };

    if (stage == "ingest") {
      mix(panel_config_digest());
      if (config_.panel.source == "manifest") {
        mix_file(config_.panel.manifest_path);
        // manifest-listed data files
        if (fs::exists(config_.panel.manifest_path)) {
          const json manifest = json::parse(read_file(config_.panel.manifest_path));
          for (const auto& s : manifest.at("series")) {
            mix_file(resolve_data_path(s.at("path").get<std::string>()));
          }
        }
      }
    } else if (stage == "select") {
      mix(selection_digest());
      mix_file(out_ / "panel.csv");
      mix_file(out_ / "panel_meta.json");
    } else if (stage == "tune") {
      mix(models_digest());
      mix(std::to_string(config_.tuning.budget) + "/" + std::to_string(config_.tuning.folds));
      mix_file(out_ / "panel.csv");
      mix_file(out_ / "panel_meta.json");
    } else if (stage == "forecast") {
      mix(models_digest());
      mix_file(out_ / "panel.csv");
      mix_file(out_ / "panel_meta.json");
      mix_file(out_ / "tuned_params.json");
      mix_file(out_ / "selection.json");
    } else if (stage == "evaluate") {
      mix(config_.evaluation.consistency_benchmark);
      for (const auto& m : config_.models) mix_file(track_path(m.id));
      mix_file(out_ / "panel.csv");
    } else if (stage == "report") {
      mix_file(out_ / "eval_report.json");
      mix_file(out_ / "selection.json");
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  bool outputs_exist(const std::string& stage) const {
    auto all = [&](const std::vector<fs::path>& paths) {
      for (const auto& p : paths) {
        if (!fs::exists(p)) return false;
      }
      return true;
    };
    if (stage == "ingest") return all({out_ / "panel.csv", out_ / "panel_meta.json"});
    if (stage == "select") {
      return !config_.selection.enabled || all({out_ / "selection.json"});
    }
    if (stage == "tune") return all({out_ / "tuned_params.json"});
    if (stage == "forecast") {
      for (const auto& m : config_.models) {
        if (!fs::exists(track_path(m.id))) return false;
      }
      return true;
    }
    if (stage == "evaluate") return all({out_ / "eval_report.json"});
    if (stage == "report") return all({out_ / "table3.csv"});
    return false;
  }

  std::string panel_config_digest() const {
    json j;
    j["source"] = config_.panel.source;
    j["manifest"] = config_.panel.manifest_path;
    j["synthetic"] = {{"n_months", config_.panel.synthetic.n_months},
                      {"p", config_.panel.synthetic.p},
                      {"r_factors", config_.panel.synthetic.r_factors},
                      {"nonlinear_share", config_.panel.synthetic.nonlinear_share}};
    if (config_.panel.start_month) j["start_month"] = config_.panel.start_month->to_string();
    if (config_.panel.train_end) j["train_end"] = config_.panel.train_end->to_string();
    if (config_.panel.test_end) j["test_end"] = config_.panel.test_end->to_string();
    return j.dump();
  }

  std::string selection_digest() const {
    json j;
    j["enabled"] = config_.selection.enabled;
    j["n_iterations"] = config_.selection.n_iterations;
    j["burn_in"] = config_.selection.burn_in;
    j["prior_inclusion"] = config_.selection.prior_inclusion;
    j["top_k"] = config_.selection.top_k;
    return j.dump();
  }

  std::string models_digest() const {
    json arr = json::array();
    for (const auto& m : config_.models) {
      json j;
      j["id"] = m.id;
      if (m.space) {
        json sp;
        for (const auto& hp : m.space->params) {
          sp[hp.name] = {{"lower", hp.lower},
                         {"upper", hp.upper},
                         {"log", hp.log_scale},
                         {"integer", hp.integer}};
        }
        j["space"] = sp;
      }
      for (const auto& [k, v] : m.fixed) j["hyper"][k] = v;
      j["dfm"] = {{"r", m.dfm.r_factors},
                  {"p", m.dfm.p_lags},
                  {"em_max_iter", m.dfm.em_max_iter},
                  {"em_tol", m.dfm.em_tol}};
      j["series"] = m.series;
      if (m.refit_each_month) j["refit"] = *m.refit_each_month;
      arr.push_back(std::move(j));
    }
    json top;
    top["models"] = std::move(arr);
    top["refit_each_month"] = config_.evaluation.refit_each_month;
    return top.dump();
  }

  fs::path track_path(const std::string& id) const { return out_ / ("track_" + id + ".csv"); }

  std::string resolve_data_path(const std::string& rel) const {
    const fs::path p(rel);
    if (p.is_absolute()) return p.string();
    return (fs::path(config_.panel.manifest_path).parent_path() / p).string();
  }

  // ---- stages -------------------------------------------------------------

  void ingest() {
    MonthlyPanel panel;
    if (config_.panel.source == "synthetic") {
      const auto& s = config_.panel.synthetic;
      panel = generate_synthetic_panel(derive_seed(config_.seed, 100), s.n_months, s.p,
                                       s.r_factors, s.nonlinear_share)
                  .panel;
      if (config_.panel.train_end) panel.train_end = *config_.panel.train_end;
      if (config_.panel.test_end && *config_.panel.test_end < panel.test_end) {
        panel.test_end = *config_.panel.test_end;
      }
    } else {
      if (!fs::exists(config_.panel.manifest_path)) {
        throw ConfigError("manifest not found: '" + config_.panel.manifest_path + "'");
      }
      const json manifest = json::parse(read_file(config_.panel.manifest_path));
      PanelConfig pc;
      pc.target_id = manifest.at("target_id").get<std::string>();
      if (!config_.panel.train_end || !config_.panel.test_end) {
        throw ConfigError("manifest panels require panel.train_end and panel.test_end");
      }
      pc.train_end = *config_.panel.train_end;
      pc.test_end = *config_.panel.test_end;
      pc.start_month = config_.panel.start_month;

      std::vector<RawSeries> monthly;
      for (const auto& entry : manifest.at("series")) {
        SeriesMeta meta;
        meta.id = entry.at("id").get<std::string>();
        meta.name = entry.value("name", meta.id);
        meta.frequency = frequency_from_string(entry.value("frequency", "monthly"));
        meta.category = category_from_string(entry.value("category", "structured"));
        meta.unit = entry.value("unit", "");
        meta.aggregation = aggregation_from_string(entry.value("aggregation", "mean"));
        RawSeries raw = load_series_csv(resolve_data_path(entry.at("path").get<std::string>()), meta);
        monthly.push_back(aggregate_to_monthly(raw));
        TransformSpec spec;
        spec.kind = transform_kind_from_string(entry.value("transform", "yoy_pct_change"));
        spec.standardize = entry.value("standardize", true);
        pc.transforms[meta.id] = spec;
      }
      panel = assemble_panel(monthly, pc);
    }

    // write_panel_csv is deterministic; route through the atomic writer.
    const fs::path tmp_csv = out_ / "panel.csv.stage";
    const fs::path tmp_meta = out_ / "panel_meta.json.stage";
    write_panel_csv(panel, tmp_csv.string(), tmp_meta.string());
    fs::rename(tmp_csv, out_ / "panel.csv");
    fs::rename(tmp_meta, out_ / "panel_meta.json");
  }

  MonthlyPanel load_panel() const {
    const fs::path csv = out_ / "panel.csv";
    if (!fs::exists(csv)) throw Error("panel artifacts missing; run the ingest stage first");
    return read_panel_csv(csv.string(), (out_ / "panel_meta.json").string());
  }

  void select() {
    if (!config_.selection.enabled) return;
    const MonthlyPanel panel = load_panel();
    const int train_end = panel.train_end_index();
    std::vector<int> rows(train_end + 1);
    std::iota(rows.begin(), rows.end(), 0);

    const Eigen::MatrixXd design = panel.filled_design();
    Eigen::MatrixXd x(rows.size(), panel.n_cols());
    Eigen::VectorXd y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<int>(i)) = design.row(rows[i]);
      y[static_cast<int>(i)] = panel.target[rows[i]];
    }

    SelectionConfig sc;
    sc.n_iterations = config_.selection.n_iterations;
    sc.burn_in = config_.selection.burn_in;
    sc.prior_inclusion = config_.selection.prior_inclusion;
    sc.seed = derive_seed(config_.seed, 200);
    const InclusionReport report =
        gibbs_spike_slab(x, y, panel.column_ids, panel.column_categories, sc);

    json j;
    auto& cols = j["columns"] = json::array();
    for (std::size_t i = 0; i < report.column_ids.size(); ++i) {
      cols.push_back({{"id", report.column_ids[i]},
                      {"category", to_string(report.column_categories[i])},
                      {"probability", report.probabilities[i]}});
    }
    const int k = std::min(config_.selection.top_k, panel.n_cols());
    j["top_k"] = top_k_variables(report, k);
    write_file_atomic(out_ / "selection.json", j.dump(2) + "\n");
  }

  void tune() {
    const MonthlyPanel panel = load_panel();
    const CvPlan plan =
        make_time_folds(panel.months.front(), panel.train_end, config_.tuning.folds);

    json tuned;
    std::vector<const ModelSpec*> to_tune;
    for (const auto& m : config_.models) {
      if (m.family == "ar" || m.family == "dfm" || !m.fixed.empty()) continue;
      to_tune.push_back(&m);
    }

    std::vector<TuneResult> results(to_tune.size());
    parallel_for(static_cast<int>(to_tune.size()), [&](int i) {
      const ModelSpec& m = *to_tune[i];
      const SearchSpace space = m.space ? *m.space : default_search_space(m.family);
      ModelContext ctx;
      ctx.seed = model_seed(config_.seed, 300, m.id);
      results[i] = bayes_optimize(m.family, space, panel, plan, config_.tuning.budget,
                                  model_seed(config_.seed, 301, m.id), ctx);
    });

    for (std::size_t i = 0; i < to_tune.size(); ++i) {
      const ModelSpec& m = *to_tune[i];
      write_trace_csv(results[i], (out_ / ("tuning_" + m.id + ".csv")).string());
      json entry;
      for (const auto& [name, value] : results[i].best) entry["params"][name] = value;
      entry["cv_mse"] = results[i].best_cv;
      tuned[m.id] = std::move(entry);
    }
    for (const auto& m : config_.models) {
      if (m.fixed.empty()) continue;
      json entry;
      for (const auto& [name, value] : m.fixed) entry["params"][name] = value;
      entry["cv_mse"] = nullptr;
      tuned[m.id] = std::move(entry);
    }
    write_file_atomic(out_ / "tuned_params.json", tuned.dump(2) + "\n");
  }

  std::vector<std::string> resolve_dfm_columns(const ModelSpec& m,
                                               const MonthlyPanel& panel) const {
    if (m.id == "dfm_full") return {};
    if (m.id == "dfm_structured") {
      std::vector<std::string> cols;
      for (int j = 0; j < panel.n_cols(); ++j) {
        if (panel.column_categories[j] == Category::structured) {
          cols.push_back(panel.column_ids[j]);
        }
      }
      return cols;
    }
    if (m.id == "dfm_best") {
      const fs::path sel = out_ / "selection.json";
      if (!fs::exists(sel)) {
        throw Error("dfm_best needs selection artifacts; run the select stage first");
      }
      const json j = json::parse(read_file(sel));
      return j.at("top_k").get<std::vector<std::string>>();
    }
    return m.series; // dfm_electricity and explicit lists
  }

  void forecast() {
    const MonthlyPanel panel = load_panel();
    const fs::path tuned_path = out_ / "tuned_params.json";
    if (!fs::exists(tuned_path)) {
      throw Error("tuned parameters missing; run the tune stage first");
    }
    const json tuned = json::parse(read_file(tuned_path));

    const Month test_first = panel.train_end.plus(1);
    const Month test_last = panel.test_end;

    std::vector<std::string> errors(config_.models.size());
    parallel_for(static_cast<int>(config_.models.size()), [&](int i) {
      const ModelSpec& m = config_.models[i];
      try {
        HyperParams hyper = m.fixed;
        if (hyper.empty() && tuned.contains(m.id) && tuned.at(m.id).contains("params")) {
          for (const auto& [name, value] : tuned.at(m.id).at("params").items()) {
            hyper[name] = value.get<double>();
          }
        }
        ForecastOptions options;
        options.ctx.seed = model_seed(config_.seed, 400, m.id);
        options.ctx.dfm = m.dfm;
        if (m.family == "dfm") {
          options.ctx.dfm.columns = resolve_dfm_columns(m, panel);
          options.refit_each_month = m.refit_each_month.value_or(false);
        } else {
          options.refit_each_month =
              m.refit_each_month.value_or(config_.evaluation.refit_each_month);
        }
        ForecastTrack track =
            expanding_window_forecast(m.family, hyper, panel, test_first, test_last, options);
        track.model_id = m.id;
        const fs::path tmp = out_ / ("track_" + m.id + ".csv.stage");
        write_track_csv(track, tmp.string());
        fs::rename(tmp, track_path(m.id));
      } catch (const std::exception& e) {
        errors[i] = m.id + ": " + e.what();
      }
    });
    for (const auto& e : errors) {
      if (!e.empty()) throw Error(e);
    }
  }

  void evaluate() {
    const MonthlyPanel panel = load_panel();
    std::map<std::string, ForecastTrack> tracks;
    for (const auto& m : config_.models) {
      if (!fs::exists(track_path(m.id))) {
        throw Error("track for '" + m.id + "' missing; run the forecast stage first");
      }
      tracks[m.id] = read_track_csv(track_path(m.id).string(), m.id);
    }
    if (!tracks.count("ar")) throw ConfigError("evaluation needs the 'ar' baseline model");
    const ForecastTrack& baseline = tracks.at("ar");

    json report;
    report["baseline"] = "ar";
    auto& models = report["models"] = json::array();

    std::vector<ForecastTrack> ml_tracks;
    for (const auto& m : config_.models) {
      const ForecastTrack& track = tracks.at(m.id);
      json entry;
      entry["id"] = m.id;
      const RmseResult rmse = rmse_report(track, baseline);
      entry["rmse"] = rmse.rmse;
      entry["relative_rmse"] = rmse.relative;
      entry["n_months"] = rmse.n_months;
      if (m.id != "ar") {
        try {
          const DmResult dm = dm_test(track, baseline, 1, true, true);
          entry["dm_stat"] = dm.statistic;
          entry["dm_p"] = dm.p_value;
        } catch (const DegenerateDifferentialError&) {
          entry["dm_stat"] = nullptr;
          entry["dm_p"] = nullptr;
        }
      }
      models.push_back(std::move(entry));
      if (std::find(kMlModels.begin(), kMlModels.end(), m.id) != kMlModels.end()) {
        ml_tracks.push_back(track);
      }
    }

    if (!ml_tracks.empty()) {
      const ForecastTrack combo = combine_mean(ml_tracks);
      const RmseResult rmse = rmse_report(combo, baseline);
      json entry;
      entry["id"] = "combination";
      entry["rmse"] = rmse.rmse;
      entry["relative_rmse"] = rmse.relative;
      entry["n_months"] = rmse.n_months;
      const DmResult dm = dm_test(combo, baseline, 1, true, true);
      entry["dm_stat"] = dm.statistic;
      entry["dm_p"] = dm.p_value;
      report["combination"] = std::move(entry);
    }

    const std::string bench_id = config_.evaluation.consistency_benchmark;
    if (tracks.count(bench_id)) {
      const ForecastTrack& bench = tracks.at(bench_id);
      auto& consistency = report["consistency"] = json::array();
      for (const auto& m : config_.models) {
        if (std::find(kMlModels.begin(), kMlModels.end(), m.id) == kMlModels.end()) continue;
        const ForecastTrack& track = tracks.at(m.id);
        json entry;
        entry["id"] = m.id;
        try {
          const ConsistencyResult c = consistency_regression(track.actuals, bench, track);
          entry["beta1"] = c.beta1;
          entry["beta2"] = c.beta2;
          entry["aic"] = c.aic;
          entry["p_value"] = c.p_value_beta2;
          entry["dm_p"] = c.dm_p_value;
        } catch (const Error& e) {
          entry["error"] = e.what();
        }
        consistency.push_back(std::move(entry));
      }
    }
    write_file_atomic(out_ / "eval_report.json", report.dump(2) + "\n");
  }

  const PipelineConfig& config_;
  fs::path out_;
  std::optional<std::string> filter_;
};

} // namespace detail

void run_pipeline(const PipelineConfig& config, const std::optional<std::string>& stage_filter) {
  detail::Pipeline pipeline(config, stage_filter);
  pipeline.run();
}

void emit_report(const std::string& out_dir) {
  const fs::path out(out_dir);

  // inclusion.csv from the selection artifact, when present.
  const fs::path selection = out / "selection.json";
  if (fs::exists(selection)) {
    const json j = json::parse(read_file(selection));
    std::ostringstream csv;
    csv << "id,category,probability\n";
    std::vector<std::tuple<double, std::string, std::string>> rows;
    for (const auto& col : j.at("columns")) {
      rows.emplace_back(col.at("probability").get<double>(), col.at("id").get<std::string>(),
                        col.at("category").get<std::string>());
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
      return std::get<1>(a) < std::get<1>(b);
    });
    for (const auto& [prob, id, category] : rows) {
      csv << id << "," << category << "," << format_fixed(prob) << "\n";
    }
    write_file_atomic(out / "inclusion.csv", csv.str());
  }

  const fs::path report_path = out / "eval_report.json";
  if (!fs::exists(report_path)) {
    throw Error("evaluation artifacts missing; run the evaluate stage before report");
  }
  const json report = json::parse(read_file(report_path));

  // table3: model, RMSE, relative RMSE, DM p-value (one row per model plus
  // the combination).
  {
    std::ostringstream csv;
    csv << "model,rmse,relative_rmse,dm_p_value\n";
    double max_ml_rmse = -1.0;
    for (const auto& entry : report.at("models")) {
      csv << entry.at("id").get<std::string>() << ","
          << format_fixed(entry.at("rmse").get<double>()) << ","
          << format_fixed(entry.at("relative_rmse").get<double>()) << ",";
      if (entry.contains("dm_p") && !entry.at("dm_p").is_null()) {
        csv << format_fixed(entry.at("dm_p").get<double>());
      }
      csv << "\n";
      const std::string id = entry.at("id").get<std::string>();
      if (std::find(kMlModels.begin(), kMlModels.end(), id) != kMlModels.end()) {
        max_ml_rmse = std::max(max_ml_rmse, entry.at("rmse").get<double>());
      }
    }
    if (report.contains("combination")) {
      const auto& combo = report.at("combination");
      csv << "combination," << format_fixed(combo.at("rmse").get<double>()) << ","
          << format_fixed(combo.at("relative_rmse").get<double>()) << ","
          << format_fixed(combo.at("dm_p").get<double>()) << "\n";
      if (max_ml_rmse >= 0.0 && combo.at("rmse").get<double>() > max_ml_rmse + 1e-12) {
        throw Error("combination RMSE exceeds the worst combined model");
      }
    }
    write_file_atomic(out / "table3.csv", csv.str());
  }

  // table4: consistency regression per ML model.
  if (report.contains("consistency")) {
    std::ostringstream csv;
    csv << "model,beta2,aic,p_value,dm_p_value\n";
    for (const auto& entry : report.at("consistency")) {
      csv << entry.at("id").get<std::string>() << ",";
      if (entry.contains("beta2")) {
        csv << format_fixed(entry.at("beta2").get<double>()) << ","
            << format_fixed(entry.at("aic").get<double>(), 2) << ","
            << format_fixed(entry.at("p_value").get<double>()) << ","
            << format_fixed(entry.at("dm_p").get<double>());
      } else {
        csv << ",,," << entry.value("error", "");
      }
      csv << "\n";
    }
    write_file_atomic(out / "table4.csv", csv.str());
  }

  // plot data: month, actual, prediction per track artifact.
  for (const auto& file : fs::directory_iterator(out)) {
    const std::string name = file.path().filename().string();
    if (name.rfind("track_", 0) == 0 && name.size() > 10 &&
        name.substr(name.size() - 4) == ".csv") {
      const std::string id = name.substr(6, name.size() - 10);
      fs::copy_file(file.path(), out / ("plotdata_" + id + ".csv"),
                    fs::copy_options::overwrite_existing);
    }
  }
}

int run_selftest() {
  // Small deterministic checks across the numerical cores.
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "ok" : "FAIL", what.c_str());
    if (!ok) ++failures;
  };

  {
    Eigen::MatrixXd x(2, 1);
    x << 1, -1;
    Eigen::VectorXd y(2);
    y << 1, -1;
    PenaltySpec spec;
    spec.alpha = 0.0;
    spec.lambda = 2.0;
    FitOptions options;
    options.fit_intercept = false;
    options.tol = 1e-12;
    const LinearFit fit = fit_penalized(x, y, spec, options);
    check(std::abs(fit.coefficients[0] - 0.5) < 1e-10, "ridge closed form");
  }
  {
    const auto folds = make_time_folds(Month(2008, 1), Month(2014, 8), 5);
    bool ok = folds.k() == 5;
    for (const auto& [b, e] : folds.folds) ok = ok && (e - b == 16);
    check(ok, "fold arithmetic");
  }
  {
    const auto synth = generate_synthetic_panel(1, 48, 8, 2, 0.3);
    const auto again = generate_synthetic_panel(1, 48, 8, 2, 0.3);
    check((synth.panel.design - again.panel.design).norm() == 0.0, "synthetic determinism");
  }
  return failures == 0 ? 0 : 1;
}

} // namespace nowcast
