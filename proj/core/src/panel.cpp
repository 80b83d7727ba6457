#include "nowcast/panel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Longest representation that round-trips a double through text.
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
} // namespace

int MonthlyPanel::index_of(Month m) const {
  if (months.empty()) return -1;
  const int idx = m.index - months.front().index;
  if (idx < 0 || idx >= n_months()) return -1;
  return idx;
}

int MonthlyPanel::column_index(const std::string& id) const {
  for (int j = 0; j < n_cols(); ++j) {
    if (column_ids[j] == id) return j;
  }
  return -1;
}

Eigen::MatrixXd MonthlyPanel::filled_design() const {
  Eigen::MatrixXd filled = design;
  for (int i = 0; i < filled.rows(); ++i) {
    for (int j = 0; j < filled.cols(); ++j) {
      if (std::isnan(filled(i, j))) filled(i, j) = 0.0;
    }
  }
  return filled;
}

void MonthlyPanel::validate() const {
  const int n = n_months();
  const int p = n_cols();
  if (design.rows() != n || design.cols() != p) {
    throw DimensionError("panel: design is " + std::to_string(design.rows()) + "x" +
                         std::to_string(design.cols()) + ", expected " + std::to_string(n) +
                         "x" + std::to_string(p));
  }
  if (static_cast<int>(missing_mask.size()) != n * p) {
    throw DimensionError("panel: mask size mismatch");
  }
  if (target.size() != n) throw DimensionError("panel: target length mismatch");
  if (static_cast<int>(column_stats.size()) != p ||
      static_cast<int>(column_categories.size()) != p) {
    throw DimensionError("panel: column metadata length mismatch");
  }
  for (std::size_t i = 1; i < months.size(); ++i) {
    if (months[i].index != months[i - 1].index + 1) {
      throw DimensionError("panel: months not contiguous at " + months[i].to_string());
    }
  }
}

MonthlyPanel assemble_panel(const std::vector<RawSeries>& series_set, const PanelConfig& config) {
  if (!(config.train_end < config.test_end)) {
    throw ConfigError("panel: train_end must precede test_end");
  }

  // Transform every series into month -> value.
  auto transformed_values = [&](const RawSeries& s) {
    TransformSpec spec;
    if (auto it = config.transforms.find(s.id); it != config.transforms.end()) spec = it->second;
    RawSeries t;
    switch (spec.kind) {
      case TransformKind::yoy_pct_change: t = yoy_transform(s); break;
      case TransformKind::level: t = s; break;
      case TransformKind::log_level: t = log_transform(s); break;
    }
    std::map<int, double> values;
    for (const auto& obs : t.observations) values[Month::of(obs.date).index] = obs.value;
    return values;
  };

  const RawSeries* target_series = nullptr;
  for (std::size_t a = 0; a < series_set.size(); ++a) {
    if (series_set[a].frequency != Frequency::monthly) {
      throw ConfigError("panel: series '" + series_set[a].id + "' is not monthly");
    }
    for (std::size_t b = a + 1; b < series_set.size(); ++b) {
      if (series_set[a].id == series_set[b].id) {
        throw ConfigError("panel: duplicate series id '" + series_set[a].id + "'");
      }
    }
    if (series_set[a].id == config.target_id) target_series = &series_set[a];
  }
  if (!target_series) throw ConfigError("panel: target series '" + config.target_id + "' absent");

  const auto target_values = transformed_values(*target_series);
  if (target_values.empty()) throw TargetGapError("panel: target has no observations");

  const Month start = config.start_month ? *config.start_month : Month(target_values.begin()->first);
  if (!(start < config.test_end) && !(start == config.test_end)) {
    throw ConfigError("panel: start month after test_end");
  }

  MonthlyPanel panel;
  panel.train_end = config.train_end;
  panel.test_end = config.test_end;
  const int n = month_span(start, config.test_end);
  panel.months.reserve(n);
  for (int i = 0; i < n; ++i) panel.months.push_back(start.plus(i));

  // Target: must be gap-free inside the training window.
  panel.target = Eigen::VectorXd::Constant(n, kNaN);
  for (int i = 0; i < n; ++i) {
    if (auto it = target_values.find(panel.months[i].index); it != target_values.end()) {
      panel.target[i] = it->second;
    } else if (panel.months[i] <= config.train_end) {
      throw TargetGapError("panel: target missing at " + panel.months[i].to_string());
    }
  }

  const int train_len = month_span(start, config.train_end);
  {
    std::vector<double> train_target(panel.target.data(), panel.target.data() + train_len);
    double mean = 0.0;
    for (double v : train_target) mean += v;
    mean /= static_cast<double>(train_len);
    double ss = 0.0;
    for (double v : train_target) ss += (v - mean) * (v - mean);
    panel.target_stats = {mean, train_len > 1 ? std::sqrt(ss / (train_len - 1)) : 0.0};
  }

  const int p = static_cast<int>(series_set.size()) - 1;
  panel.design = Eigen::MatrixXd::Constant(n, p, kNaN);
  panel.missing_mask.assign(static_cast<std::size_t>(n) * p, 1);
  panel.column_ids.reserve(p);
  panel.column_categories.reserve(p);
  panel.column_stats.reserve(p);

  int j = 0;
  for (const auto& s : series_set) {
    if (s.id == config.target_id) continue;
    const auto values = transformed_values(s);

    TransformSpec spec;
    if (auto it = config.transforms.find(s.id); it != config.transforms.end()) spec = it->second;

    // Training-window statistics over observed entries only.
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < train_len; ++i) {
      if (auto it = values.find(panel.months[i].index); it != values.end()) {
        sum += it->second;
        ++count;
      }
    }
    if (count < 2) {
      throw DegenerateColumnError("panel: column '" + s.id +
                                  "' has fewer than 2 training observations");
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (int i = 0; i < train_len; ++i) {
      if (auto it = values.find(panel.months[i].index); it != values.end()) {
        ss += (it->second - mean) * (it->second - mean);
      }
    }
    const double sd = std::sqrt(ss / (count - 1));
    if (!(sd > 1e-12)) {
      throw DegenerateColumnError("panel: column '" + s.id +
                                  "' has zero training-window variance");
    }

    const ColumnStats stats = spec.standardize ? ColumnStats{mean, sd} : ColumnStats{0.0, 1.0};
    for (int i = 0; i < n; ++i) {
      if (auto it = values.find(panel.months[i].index); it != values.end()) {
        panel.design(i, j) = (it->second - stats.mean) / stats.sd;
        panel.missing_mask[static_cast<std::size_t>(i) * p + j] = 0;
      }
    }

    panel.column_ids.push_back(s.id);
    panel.column_categories.push_back(s.category);
    panel.column_stats.push_back(stats);
    ++j;
  }

  // Ragged edge: carry the last observed standardized value across the
  // trailing missing run. The mask keeps recording true missingness.
  for (int col = 0; col < p; ++col) {
    int last_obs = -1;
    for (int i = n - 1; i >= 0; --i) {
      if (!std::isnan(panel.design(i, col))) {
        last_obs = i;
        break;
      }
    }
    if (last_obs < 0) continue;
    for (int i = last_obs + 1; i < n; ++i) panel.design(i, col) = panel.design(last_obs, col);
  }

  panel.validate();
  return panel;
}

void write_panel_csv(const MonthlyPanel& panel, const std::string& csv_path,
                     const std::string& sidecar_json_path) {
  std::ostringstream csv;
  csv << "month,target";
  for (const auto& id : panel.column_ids) csv << "," << id;
  csv << "\n";
  for (int i = 0; i < panel.n_months(); ++i) {
    csv << panel.months[i].to_string();
    csv << ",";
    if (!std::isnan(panel.target[i])) csv << format_double(panel.target[i]);
    for (int j = 0; j < panel.n_cols(); ++j) {
      csv << ",";
      if (!std::isnan(panel.design(i, j))) csv << format_double(panel.design(i, j));
    }
    csv << "\n";
  }
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write '" + csv_path + "'");
  out << csv.str();

  nlohmann::json meta;
  meta["train_end"] = panel.train_end.to_string();
  meta["test_end"] = panel.test_end.to_string();
  meta["target_stats"] = {{"mean", panel.target_stats.mean}, {"sd", panel.target_stats.sd}};
  auto& cols = meta["columns"] = nlohmann::json::array();
  for (int j = 0; j < panel.n_cols(); ++j) {
    nlohmann::json col;
    col["id"] = panel.column_ids[j];
    col["category"] = to_string(panel.column_categories[j]);
    col["mean"] = panel.column_stats[j].mean;
    col["sd"] = panel.column_stats[j].sd;
    std::string mask(panel.n_months(), '0');
    for (int i = 0; i < panel.n_months(); ++i) {
      if (panel.is_missing(i, j)) mask[i] = '1';
    }
    col["missing"] = mask;
    cols.push_back(std::move(col));
  }
  std::ofstream meta_out(sidecar_json_path);
  if (!meta_out) throw Error("cannot write '" + sidecar_json_path + "'");
  meta_out << meta.dump(2) << "\n";
}

MonthlyPanel read_panel_csv(const std::string& csv_path, const std::string& sidecar_json_path) {
  std::ifstream in(csv_path);
  if (!in) throw InputFormatError("cannot open '" + csv_path + "'");
  std::ifstream meta_in(sidecar_json_path);
  if (!meta_in) throw InputFormatError("cannot open '" + sidecar_json_path + "'");

  nlohmann::json meta = nlohmann::json::parse(meta_in);

  MonthlyPanel panel;
  panel.train_end = Month::parse(meta.at("train_end").get<std::string>());
  panel.test_end = Month::parse(meta.at("test_end").get<std::string>());
  panel.target_stats = {meta.at("target_stats").at("mean").get<double>(),
                        meta.at("target_stats").at("sd").get<double>()};

  std::string line;
  if (!std::getline(in, line)) throw InputFormatError(csv_path + ": empty file");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    // trailing empty field is dropped by getline; normalize later by padding
    rows.push_back(std::move(fields));
  }

  const auto& cols = meta.at("columns");
  const int p = static_cast<int>(cols.size());
  const int n = static_cast<int>(rows.size());
  panel.design = Eigen::MatrixXd::Constant(n, p, kNaN);
  panel.target = Eigen::VectorXd::Constant(n, kNaN);
  panel.missing_mask.assign(static_cast<std::size_t>(n) * p, 0);
  panel.months.reserve(n);

  for (int i = 0; i < n; ++i) {
    auto& fields = rows[i];
    fields.resize(static_cast<std::size_t>(p) + 2);
    panel.months.push_back(Month::parse(fields[0]));
    if (!fields[1].empty()) panel.target[i] = std::stod(fields[1]);
    for (int j = 0; j < p; ++j) {
      if (!fields[static_cast<std::size_t>(j) + 2].empty()) {
        panel.design(i, j) = std::stod(fields[static_cast<std::size_t>(j) + 2]);
      }
    }
  }

  for (int j = 0; j < p; ++j) {
    const auto& col = cols[j];
    panel.column_ids.push_back(col.at("id").get<std::string>());
    panel.column_categories.push_back(category_from_string(col.at("category").get<std::string>()));
    panel.column_stats.push_back({col.at("mean").get<double>(), col.at("sd").get<double>()});
    const std::string mask = col.at("missing").get<std::string>();
    if (static_cast<int>(mask.size()) != n) throw InputFormatError("panel sidecar: mask length");
    for (int i = 0; i < n; ++i) panel.set_missing(i, j, mask[i] == '1');
  }

  panel.validate();
  return panel;
}

} // namespace nowcast
