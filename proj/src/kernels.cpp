#include "chainopt/kernels.hpp"

#include <atomic>

namespace chainopt::kernels {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool has = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return has;
#else
  return false;
#endif
}

namespace {

struct Table {
  DotFn dot;
  AxpyFn axpy;
};

constexpr Table kScalar{dot_scalar, axpy_scalar};
constexpr Table kAvx2{dot_avx2, axpy_avx2};

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar};
  return isa;
}

const Table& table() { return current().load(std::memory_order_relaxed) == Isa::Avx2 ? kAvx2 : kScalar; }

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa select_isa(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_has_avx2()) isa = Isa::Scalar;
  current().store(isa, std::memory_order_relaxed);
  return isa;
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }

}  // namespace chainopt::kernels
