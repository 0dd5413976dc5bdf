#include "portrisk/year_month.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace portrisk {

YearMonth::YearMonth(int year, int month) {
  if (month < 1 || month > 12) {
    throw std::invalid_argument("month out of range: " + std::to_string(month));
  }
  index_ = year * 12 + (month - 1);
}

YearMonth YearMonth::parse(std::string_view text) {
  auto fail = [&]() -> YearMonth {
    throw std::invalid_argument("expected YYYY-MM, got '" + std::string(text) + "'");
  };
  if (text.size() != 7 || text[4] != '-') return fail();
  int year = 0;
  int month = 0;
  auto [p1, e1] = std::from_chars(text.data(), text.data() + 4, year);
  auto [p2, e2] = std::from_chars(text.data() + 5, text.data() + 7, month);
  if (e1 != std::errc{} || e2 != std::errc{} || p1 != text.data() + 4 || p2 != text.data() + 7) {
    return fail();
  }
  if (month < 1 || month > 12) return fail();
  return YearMonth(year, month);
}

int YearMonth::year() const {
  // floor division keeps negative years consistent
  return index_ >= 0 ? index_ / 12 : (index_ - 11) / 12;
}

int YearMonth::month() const { return index_ - year() * 12 + 1; }

std::string YearMonth::str() const {
  char buf[32];  // room for any int, keeps -Wformat-truncation quiet
  std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
  return buf;
}

}  // namespace portrisk
