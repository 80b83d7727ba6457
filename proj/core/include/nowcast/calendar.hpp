#pragma once

#include <compare>
#include <string>

namespace nowcast {

// Proleptic Gregorian calendar date.
struct Date {
  int year = 1970;
  int month = 1; // 1..12
  int day = 1;   // 1..31

  // Parses "YYYY-MM-DD". Throws InputFormatError on malformed input.
  static Date parse(const std::string& iso);

  std::string to_string() const;

  // Days since 1970-01-01 (negative before the epoch).
  long serial_day() const;

  auto operator<=>(const Date&) const = default;
};

// Calendar month, stored as a flat index so month arithmetic is plain integer
// arithmetic: index = year * 12 + (month - 1).
struct Month {
  int index = 0;

  Month() = default;
  explicit Month(int idx) : index(idx) {}
  Month(int year, int month) : index(year * 12 + month - 1) {}

  // Parses "YYYY-MM". Throws InputFormatError on malformed input.
  static Month parse(const std::string& ym);
  static Month of(const Date& d) { return Month(d.year, d.month); }

  int year() const { return index / 12; }
  int month() const { return index % 12 + 1; }
  int quarter() const { return (month() - 1) / 3 + 1; }

  std::string to_string() const; // "YYYY-MM"

  Month plus(int n) const { return Month(index + n); }

  auto operator<=>(const Month&) const = default;
};

// Number of months in the inclusive range [first, last].
inline int month_span(Month first, Month last) { return last.index - first.index + 1; }

} // namespace nowcast
