#include "nowcast/calendar.hpp"

#include <array>
#include <cstdio>

#include "nowcast/errors.hpp"

namespace nowcast {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr std::array<int, 12> lengths = {31, 28, 31, 30, 31, 30,
                                                  31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return lengths[m - 1];
}

bool parse_int(const std::string& s, std::size_t begin, std::size_t len, int& out) {
  if (begin + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = begin; i < begin + len; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

} // namespace

Date Date::parse(const std::string& iso) {
  Date d;
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' ||
      !parse_int(iso, 0, 4, d.year) || !parse_int(iso, 5, 2, d.month) ||
      !parse_int(iso, 8, 2, d.day)) {
    throw InputFormatError("not an ISO date (YYYY-MM-DD): '" + iso + "'");
  }
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) {
    throw InputFormatError("date out of range: '" + iso + "'");
  }
  return d;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

long Date::serial_day() const {
  // Howard Hinnant's days_from_civil.
  long y = year - (month <= 2);
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

Month Month::parse(const std::string& ym) {
  int y = 0, m = 0;
  if (ym.size() != 7 || ym[4] != '-' || !parse_int(ym, 0, 4, y) || !parse_int(ym, 5, 2, m) ||
      m < 1 || m > 12) {
    throw InputFormatError("not a calendar month (YYYY-MM): '" + ym + "'");
  }
  return Month(y, m);
}

std::string Month::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year(), month());
  return buf;
}

} // namespace nowcast
