#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace portrisk {

/// Calendar month with year-month granularity. Stored as a linear month
/// index so that arithmetic and ordering are trivial.
class YearMonth {
 public:
  constexpr YearMonth() = default;
  YearMonth(int year, int month);

  /// Parses "YYYY-MM". Throws std::invalid_argument on anything else.
  static YearMonth parse(std::string_view text);
  static constexpr YearMonth from_index(int index) {
    YearMonth ym;
    ym.index_ = index;
    return ym;
  }

  constexpr int index() const { return index_; }
  int year() const;
  int month() const;
  std::string str() const;

  constexpr YearMonth operator+(int months) const { return from_index(index_ + months); }
  constexpr YearMonth operator-(int months) const { return from_index(index_ - months); }
  constexpr int operator-(YearMonth other) const { return index_ - other.index_; }
  YearMonth& operator++() {
    ++index_;
    return *this;
  }

  constexpr auto operator<=>(const YearMonth&) const = default;

 private:
  int index_ = 0;  // year * 12 + (month - 1)
};

}  // namespace portrisk
