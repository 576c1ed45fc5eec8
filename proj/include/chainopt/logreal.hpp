#pragma once

#include <cmath>
#include <limits>
#include <string>

namespace chainopt {

// Nonnegative extended real kept as its natural log: -inf is 0, +inf is infinity.
class LogReal {
 public:
  LogReal() = default;
  static LogReal from(double x);
  static LogReal from_log(double lg) { return LogReal(lg); }
  static LogReal zero() { return LogReal(-std::numeric_limits<double>::infinity()); }
  static LogReal one() { return LogReal(0.0); }
  static LogReal inf() { return LogReal(std::numeric_limits<double>::infinity()); }

  double log() const { return lg_; }
  double to_double() const { return std::exp(lg_); }
  bool is_zero() const { return lg_ == -std::numeric_limits<double>::infinity(); }
  bool is_inf() const { return lg_ == std::numeric_limits<double>::infinity(); }
  bool is_finite() const { return !is_inf(); }
  std::string str() const;

  // 0 * inf = 0
  friend LogReal operator*(LogReal a, LogReal b);
  friend LogReal operator/(LogReal a, LogReal b);
  friend LogReal operator+(LogReal a, LogReal b);
  LogReal& operator*=(LogReal o) { return *this = *this * o; }
  LogReal& operator+=(LogReal o) { return *this = *this + o; }

  friend bool operator==(LogReal a, LogReal b) { return a.lg_ == b.lg_; }
  friend auto operator<=>(LogReal a, LogReal b) { return a.lg_ <=> b.lg_; }

 private:
  explicit LogReal(double lg) : lg_(lg) {}
  double lg_ = -std::numeric_limits<double>::infinity();
};

LogReal min(LogReal a, LogReal b);
LogReal max(LogReal a, LogReal b);
LogReal sqrt(LogReal a);
LogReal pow(LogReal a, double k);

}  // namespace chainopt
