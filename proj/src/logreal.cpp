#include "chainopt/logreal.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace chainopt {

LogReal LogReal::from(double x) {
  if (std::isnan(x) || x < 0) throw std::domain_error("LogReal: value must be a nonnegative number");
  return LogReal(std::log(x));
}

std::string LogReal::str() const {
  if (is_inf()) return "inf";
  if (is_zero()) return "0";
  char buf[64];
  if (std::abs(lg_) < 600)
    std::snprintf(buf, sizeof buf, "%.6g", std::exp(lg_));
  else
    std::snprintf(buf, sizeof buf, "exp(%.6g)", lg_);
  return buf;
}

LogReal operator*(LogReal a, LogReal b) {
  if (a.is_zero() || b.is_zero()) return LogReal::zero();
  return LogReal(a.lg_ + b.lg_);
}

LogReal operator/(LogReal a, LogReal b) {
  if (b.is_zero()) throw std::domain_error("LogReal: division by zero");
  if (a.is_zero()) return LogReal::zero();
  if (b.is_inf()) {
    if (a.is_inf()) throw std::domain_error("LogReal: inf / inf");
    return LogReal::zero();
  }
  return LogReal(a.lg_ - b.lg_);
}

LogReal operator+(LogReal a, LogReal b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (a.is_inf() || b.is_inf()) return LogReal::inf();
  const double hi = std::max(a.lg_, b.lg_), lo = std::min(a.lg_, b.lg_);
  return LogReal(hi + std::log1p(std::exp(lo - hi)));
}

LogReal min(LogReal a, LogReal b) { return a < b ? a : b; }
LogReal max(LogReal a, LogReal b) { return a < b ? b : a; }
LogReal sqrt(LogReal a) { return a.is_zero() || a.is_inf() ? a : LogReal::from_log(0.5 * a.log()); }

LogReal pow(LogReal a, double k) {
  if (k == 0) return LogReal::one();
  if (k < 0) throw std::domain_error("LogReal: negative power");
  if (a.is_zero() || a.is_inf()) return a;
  return LogReal::from_log(k * a.log());
}

}  // namespace chainopt
