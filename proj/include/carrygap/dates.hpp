#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>

namespace carrygap {

// Calendar date, backed by a days-since-epoch count. Comparable, hashable,
// cheap to copy. All file I/O uses ISO-8601 (YYYY-MM-DD).
struct Date {
  std::chrono::sys_days sd{};

  Date() = default;
  explicit Date(std::chrono::sys_days d) : sd(d) {}
  Date(int y, unsigned m, unsigned d)
      : sd(std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}) {}

  auto operator<=>(const Date&) const = default;

  int serial() const { return sd.time_since_epoch().count(); }

  int year() const {
    return int(std::chrono::year_month_day{sd}.year());
  }

  // Mon..Fri
  bool is_business_day() const {
    const auto wd = std::chrono::weekday{sd};
    return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
  }

  Date plus_days(int n) const { return Date{sd + std::chrono::days{n}}; }

  std::string to_string() const {
    const std::chrono::year_month_day ymd{sd};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()));
    return buf;
  }
};

inline int days_between(Date from, Date to) { return to.serial() - from.serial(); }

// ACT/365.25 calendar-day year fraction.
inline double year_fraction(Date from, Date to) {
  return double(days_between(from, to)) / 365.25;
}

inline Date parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw std::runtime_error("bad date: '" + std::string(s) + "' (want YYYY-MM-DD)");
  auto num = [&](size_t pos, size_t len) {
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
      if (s[i] < '0' || s[i] > '9')
        throw std::runtime_error("bad date: '" + std::string(s) + "'");
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  const int y = num(0, 4);
  const unsigned m = unsigned(num(5, 2)), d = unsigned(num(8, 2));
  const auto ymd = std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d};
  if (!ymd.ok()) throw std::runtime_error("invalid calendar date: '" + std::string(s) + "'");
  return Date{std::chrono::sys_days{ymd}};
}

// Minute of day, parsed from "HH:MM".
inline int parse_minute(std::string_view s) {
  if (s.size() != 5 || s[2] != ':')
    throw std::runtime_error("bad time: '" + std::string(s) + "' (want HH:MM)");
  auto dig = [&](size_t i) {
    if (s[i] < '0' || s[i] > '9')
      throw std::runtime_error("bad time: '" + std::string(s) + "'");
    return s[i] - '0';
  };
  const int h = dig(0) * 10 + dig(1), m = dig(3) * 10 + dig(4);
  if (h > 23 || m > 59) throw std::runtime_error("bad time: '" + std::string(s) + "'");
  return h * 60 + m;
}

inline std::string format_minute(int minute_of_day) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", minute_of_day / 60, minute_of_day % 60);
  return buf;
}

}  // namespace carrygap
