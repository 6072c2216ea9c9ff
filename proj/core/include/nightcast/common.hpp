#pragma once

#include <cstdint>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nightcast {

// Error taxonomy. Callers that care about retriability or usage-vs-runtime
// classification catch the concrete type.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Archive/network failures that make sense to retry carry retriable=true.
class FetchError : public std::runtime_error {
 public:
  FetchError(const std::string& msg, bool retriable)
      : std::runtime_error(msg), retriable_(retriable) {}
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

// Calendar date as days since 1970-01-01 (UTC day granularity).
class Date {
 public:
  Date() = default;
  explicit Date(std::int64_t days) : days_(days) {}
  static Date from_ymd(int y, int m, int d);
  static Date parse(const std::string& iso);  // "YYYY-MM-DD"

  std::int64_t days() const { return days_; }
  std::string to_string() const;
  void to_ymd(int& y, int& m, int& d) const;

  Date operator+(std::int64_t n) const { return Date(days_ + n); }
  Date operator-(std::int64_t n) const { return Date(days_ - n); }
  std::int64_t operator-(Date o) const { return days_ - o.days_; }
  auto operator<=>(const Date&) const = default;

 private:
  std::int64_t days_ = 0;
};

// Howard Hinnant's civil-date algorithms; exact for the proleptic Gregorian
// calendar over the whole int range we care about.
inline Date Date::from_ymd(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return Date(era * 146097 + static_cast<std::int64_t>(doe) - 719468);
}

inline void Date::to_ymd(int& y, int& m, int& d) const {
  std::int64_t z = days_ + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

inline std::string Date::to_string() const {
  int y, m, d;
  to_ymd(y, m, d);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

inline Date Date::parse(const std::string& iso) {
  int y, m, d;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 ||
      m > 12 || d < 1 || d > 31) {
    throw ValidationError("bad date '" + iso + "', expected YYYY-MM-DD");
  }
  return from_ymd(y, m, d);
}

inline void log_warn(const std::string& msg) {
  std::cerr << "[nightcast] warning: " << msg << "\n";
}

inline void log_info(const std::string& msg) {
  std::cerr << "[nightcast] " << msg << "\n";
}

}  // namespace nightcast
