#pragma once

#include <cstddef>

namespace chainopt::kernels {

enum class Isa { Scalar, Avx2 };

using DotFn = double (*)(const double* a, const double* b, std::size_t n);
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);

// Scalar reference kernels: strict left-to-right accumulation.
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);

// AVX2/FMA variants; only callable when the CPU reports AVX2 and FMA.
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);

bool cpu_has_avx2();

// Currently selected implementation. Defaults to the best the CPU supports.
Isa active_isa();
// Force an implementation (falls back to scalar when unsupported). Returns the ISA in effect.
Isa select_isa(Isa isa);
const char* isa_name(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// RAII override used by tests that need the scalar summation order.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : prev_(active_isa()) { select_isa(isa); }
  ~ScopedIsa() { select_isa(prev_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa prev_;
};

}  // namespace chainopt::kernels
