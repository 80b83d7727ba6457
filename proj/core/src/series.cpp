#include "nowcast/series.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "nowcast/errors.hpp"

namespace nowcast {

Frequency frequency_from_string(const std::string& s) {
  if (s == "daily") return Frequency::daily;
  if (s == "weekly") return Frequency::weekly;
  if (s == "monthly") return Frequency::monthly;
  if (s == "quarterly") return Frequency::quarterly;
  throw ConfigError("unknown frequency: '" + s + "'");
}

Category category_from_string(const std::string& s) {
  if (s == "structured") return Category::structured;
  if (s == "unstructured") return Category::unstructured;
  throw ConfigError("unknown category: '" + s + "'");
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "sum") return Aggregation::sum;
  if (s == "last") return Aggregation::last;
  throw ConfigError("unknown aggregation: '" + s + "'");
}

TransformKind transform_kind_from_string(const std::string& s) {
  if (s == "yoy_pct_change") return TransformKind::yoy_pct_change;
  if (s == "level") return TransformKind::level;
  if (s == "log_level") return TransformKind::log_level;
  throw ConfigError("unknown transform: '" + s + "'");
}

std::string to_string(Frequency f) {
  switch (f) {
    case Frequency::daily: return "daily";
    case Frequency::weekly: return "weekly";
    case Frequency::monthly: return "monthly";
    case Frequency::quarterly: return "quarterly";
  }
  return "?";
}

std::string to_string(Category c) {
  return c == Category::structured ? "structured" : "unstructured";
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::sum: return "sum";
    case Aggregation::last: return "last";
  }
  return "?";
}

std::string to_string(TransformKind k) {
  switch (k) {
    case TransformKind::yoy_pct_change: return "yoy_pct_change";
    case TransformKind::level: return "level";
    case TransformKind::log_level: return "log_level";
  }
  return "?";
}

void RawSeries::validate() const {
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!std::isfinite(observations[i].value)) {
      throw InputFormatError("series '" + id + "': non-finite value at " +
                             observations[i].date.to_string());
    }
    if (i == 0) continue;
    const Date& prev = observations[i - 1].date;
    const Date& cur = observations[i].date;
    if (!(prev < cur)) {
      throw InputFormatError("series '" + id + "': dates not strictly increasing at " +
                             cur.to_string());
    }
    const long gap = cur.serial_day() - prev.serial_day();
    bool ok = true;
    switch (frequency) {
      case Frequency::daily:
        ok = gap <= 7;
        break;
      case Frequency::weekly:
        ok = gap >= 2 && gap <= 35;
        break;
      case Frequency::monthly:
        ok = Month::of(prev) < Month::of(cur);
        break;
      case Frequency::quarterly:
        ok = Month::of(prev).index / 3 < Month::of(cur).index / 3;
        break;
    }
    if (!ok) {
      throw InputFormatError("series '" + id + "': gap " + prev.to_string() + " -> " +
                             cur.to_string() + " inconsistent with " + to_string(frequency) +
                             " frequency");
    }
  }
}

namespace {

// Splits a CSV line on the first comma only; the format is two-column.
bool split_two(const std::string& line, std::string& a, std::string& b) {
  const auto pos = line.find(',');
  if (pos == std::string::npos) return false;
  a = line.substr(0, pos);
  b = line.substr(pos + 1);
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size();
}

} // namespace

RawSeries load_series_csv(const std::string& path, const SeriesMeta& meta) {
  std::ifstream in(path);
  if (!in) throw InputFormatError("cannot open '" + path + "'");

  RawSeries series;
  series.id = meta.id;
  series.name = meta.name;
  series.frequency = meta.frequency;
  series.category = meta.category;
  series.unit = meta.unit;
  series.aggregation = meta.aggregation;

  std::string line;
  int row = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    std::string date_str, value_str;
    if (!split_two(line, date_str, value_str)) {
      throw InputFormatError(path + ": row " + std::to_string(row) + ": expected 'date,value'");
    }
    date_str = trim(date_str);
    value_str = trim(value_str);

    Date date;
    try {
      date = Date::parse(date_str);
    } catch (const InputFormatError&) {
      if (first_data_row) continue; // header row
      throw InputFormatError(path + ": row " + std::to_string(row) + ": bad date '" +
                             date_str + "'");
    }
    first_data_row = false;

    if (value_str.empty()) continue; // absent observation

    double value = 0.0;
    if (!parse_double(value_str, value)) {
      throw InputFormatError(path + ": row " + std::to_string(row) + ": bad value '" +
                             value_str + "'");
    }
    if (!series.observations.empty()) {
      const Date& prev = series.observations.back().date;
      if (date == prev) {
        throw DuplicateDateError(path + ": row " + std::to_string(row) + ": duplicate date " +
                                 date.to_string());
      }
      if (date < prev) {
        throw InputFormatError(path + ": row " + std::to_string(row) +
                               ": dates out of order at " + date.to_string());
      }
    }
    series.observations.push_back({date, value});
  }
  series.validate();
  return series;
}

RawSeries aggregate_to_monthly(const RawSeries& series) {
  series.validate();
  if (series.frequency == Frequency::monthly) return series;

  RawSeries out = series;
  out.observations.clear();
  out.frequency = Frequency::monthly;

  if (series.frequency == Frequency::quarterly) {
    out.interpolated = true;
    for (const auto& obs : series.observations) {
      const Month m = Month::of(obs.date);
      const Month q_start((m.index / 3) * 3);
      for (int k = 0; k < 3; ++k) {
        const Month mk = q_start.plus(k);
        out.observations.push_back({Date{mk.year(), mk.month(), 1}, obs.value});
      }
    }
    out.validate();
    return out;
  }

  std::map<int, std::vector<double>> by_month;
  for (const auto& obs : series.observations) {
    by_month[Month::of(obs.date).index].push_back(obs.value);
  }
  for (const auto& [idx, values] : by_month) {
    double v = 0.0;
    switch (series.aggregation) {
      case Aggregation::mean: {
        double sum = 0.0;
        for (double x : values) sum += x;
        v = sum / static_cast<double>(values.size());
        break;
      }
      case Aggregation::sum: {
        for (double x : values) v += x;
        break;
      }
      case Aggregation::last:
        v = values.back();
        break;
    }
    const Month m(idx);
    out.observations.push_back({Date{m.year(), m.month(), 1}, v});
  }
  out.validate();
  return out;
}

RawSeries yoy_transform(const RawSeries& series) {
  if (series.frequency != Frequency::monthly) {
    throw ConfigError("yoy_transform requires a monthly series, got " +
                      to_string(series.frequency) + " for '" + series.id + "'");
  }
  std::map<int, double> by_month;
  for (const auto& obs : series.observations) by_month[Month::of(obs.date).index] = obs.value;

  RawSeries out = series;
  out.observations.clear();
  out.unit = "percent YoY";
  for (const auto& obs : series.observations) {
    const int idx = Month::of(obs.date).index;
    const auto base = by_month.find(idx - 12);
    if (base == by_month.end()) continue;
    if (base->second <= 0.0) {
      throw NonPositiveBaseError("series '" + series.id + "': non-positive base at " +
                                 Month(idx - 12).to_string());
    }
    out.observations.push_back({obs.date, 100.0 * (obs.value / base->second - 1.0)});
  }
  return out;
}

RawSeries log_transform(const RawSeries& series) {
  RawSeries out = series;
  for (auto& obs : out.observations) {
    if (obs.value <= 0.0) {
      throw NumericInputError("series '" + series.id + "': log of non-positive value at " +
                              obs.date.to_string());
    }
    obs.value = std::log(obs.value);
  }
  return out;
}

} // namespace nowcast
