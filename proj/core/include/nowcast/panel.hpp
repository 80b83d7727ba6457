#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nowcast/calendar.hpp"
#include "nowcast/series.hpp"

namespace nowcast {

struct ColumnStats {
  double mean = 0.0;
  double sd = 1.0;
};

// The modeling panel: one row per month, target in percent YoY, predictors
// standardized with training-window statistics. NaN marks entries with no
// observed value; missing_mask records true missingness even where the
// ragged edge was filled by carrying the last observed value forward.
struct MonthlyPanel {
  std::vector<Month> months;
  Eigen::VectorXd target;
  Eigen::MatrixXd design;
  std::vector<std::uint8_t> missing_mask; // row-major, n_months * p
  std::vector<std::string> column_ids;
  std::vector<Category> column_categories;
  std::vector<ColumnStats> column_stats;
  ColumnStats target_stats; // training-window stats, used by state-space models
  Month train_end;
  Month test_end;

  int n_months() const { return static_cast<int>(months.size()); }
  int n_cols() const { return static_cast<int>(column_ids.size()); }

  bool is_missing(int row, int col) const {
    return missing_mask[static_cast<std::size_t>(row) * column_ids.size() + col] != 0;
  }
  void set_missing(int row, int col, bool m) {
    missing_mask[static_cast<std::size_t>(row) * column_ids.size() + col] = m ? 1 : 0;
  }

  // Index of a month in the panel, -1 when absent.
  int index_of(Month m) const;
  int column_index(const std::string& id) const; // -1 when absent
  int train_end_index() const { return index_of(train_end); }

  // Design matrix with every remaining NaN (interior gaps) replaced by 0,
  // i.e. the training-window mean in standardized units. The ragged edge is
  // already carried forward at assembly.
  Eigen::MatrixXd filled_design() const;

  void validate() const;
};

struct PanelConfig {
  std::string target_id;
  std::map<std::string, TransformSpec> transforms; // per series id
  std::optional<Month> start_month;                // default: first month with target value
  Month train_end;
  Month test_end;
};

// Joins transformed monthly series into a panel. Columns keep the input
// order of `series_set` (target excluded). Standardization statistics come
// from the training window only; trailing missing values are filled by
// carrying the last observed standardized value forward.
MonthlyPanel assemble_panel(const std::vector<RawSeries>& series_set, const PanelConfig& config);

// Panel round-trip used by the pipeline cache: CSV of month,target,predictors
// plus a JSON sidecar holding stats, categories, and the missingness mask.
void write_panel_csv(const MonthlyPanel& panel, const std::string& csv_path,
                     const std::string& sidecar_json_path);
MonthlyPanel read_panel_csv(const std::string& csv_path, const std::string& sidecar_json_path);

} // namespace nowcast
