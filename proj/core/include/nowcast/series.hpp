#pragma once

#include <string>
#include <vector>

#include "nowcast/calendar.hpp"

namespace nowcast {

enum class Frequency { daily, weekly, monthly, quarterly };
enum class Category { structured, unstructured };
enum class Aggregation { mean, sum, last };

Frequency frequency_from_string(const std::string& s);
Category category_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);
std::string to_string(Frequency f);
std::string to_string(Category c);
std::string to_string(Aggregation a);

struct Observation {
  Date date;
  double value = 0.0;
};

// One indicator at its native frequency.
struct RawSeries {
  std::string id;
  std::string name;
  Frequency frequency = Frequency::monthly;
  Category category = Category::structured;
  std::string unit;
  Aggregation aggregation = Aggregation::mean;
  // Set when quarterly values were repeated across their constituent months.
  bool interpolated = false;
  std::vector<Observation> observations;

  // Checks strictly increasing dates, finite values, and that gaps between
  // observations are compatible with the declared frequency (missing periods
  // allowed: daily gaps of at most 7 days, weekly at most 5 weeks, monthly
  // and quarterly observations in distinct months/quarters).
  void validate() const;
};

// How a monthly series enters the panel.
enum class TransformKind { yoy_pct_change, level, log_level };

TransformKind transform_kind_from_string(const std::string& s);
std::string to_string(TransformKind k);

struct TransformSpec {
  TransformKind kind = TransformKind::yoy_pct_change;
  bool standardize = true;
};

// Metadata a CSV file does not carry itself.
struct SeriesMeta {
  std::string id;
  std::string name;
  Frequency frequency = Frequency::monthly;
  Category category = Category::structured;
  std::string unit;
  Aggregation aggregation = Aggregation::mean;
};

// Loads a two-column date,value CSV (ISO dates, dot decimals, optional header
// row). Rows with an empty value field become absent observations.
RawSeries load_series_csv(const std::string& path, const SeriesMeta& meta);

// Collapses a series to one observation per month using its aggregation rule.
// Monthly input is returned unchanged; quarterly values are repeated across
// the three months of their quarter and the result is flagged interpolated.
RawSeries aggregate_to_monthly(const RawSeries& series);

// Year-over-year percent change: 100 * (x_t / x_{t-12} - 1). Months whose
// 12-back base is missing are absent; a base <= 0 raises NonPositiveBaseError.
RawSeries yoy_transform(const RawSeries& series);

// Natural log of a strictly positive series.
RawSeries log_transform(const RawSeries& series);

} // namespace nowcast
