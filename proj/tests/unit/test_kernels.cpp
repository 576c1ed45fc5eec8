#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "chainopt/kernels.hpp"

using namespace chainopt::kernels;

namespace {

std::vector<double> rand_vec(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST(Kernels, ScalarDotIsLeftToRight) {
  std::mt19937_64 rng(1);
  const auto a = rand_vec(37, rng), b = rand_vec(37, rng);
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  EXPECT_EQ(dot_scalar(a.data(), b.data(), a.size()), s);
}

TEST(Kernels, Avx2MatchesScalar) {
  if (!cpu_has_avx2()) GTEST_SKIP() << "no AVX2 on this CPU";
  std::mt19937_64 rng(2);
  for (size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 64u, 1001u}) {
    const auto a = rand_vec(n, rng), b = rand_vec(n, rng);
    double abs = 0.0;
    for (size_t i = 0; i < n; ++i) abs += std::abs(a[i] * b[i]);
    EXPECT_NEAR(dot_avx2(a.data(), b.data(), n), dot_scalar(a.data(), b.data(), n), 1e-14 * (1 + abs)) << n;
    auto y1 = rand_vec(n, rng);
    auto y2 = y1;
    axpy_scalar(0.7, a.data(), y1.data(), n);
    axpy_avx2(0.7, a.data(), y2.data(), n);
    for (size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15 * (1 + std::abs(y1[i])));
  }
}

TEST(Kernels, DispatchFollowsSelection) {
  {
    ScopedIsa s(Isa::Scalar);
    EXPECT_EQ(active_isa(), Isa::Scalar);
    std::mt19937_64 rng(3);
    const auto a = rand_vec(33, rng), b = rand_vec(33, rng);
    EXPECT_EQ(dot(a.data(), b.data(), 33), dot_scalar(a.data(), b.data(), 33));
  }
  const Isa best = cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
  EXPECT_EQ(active_isa(), best);
  EXPECT_EQ(select_isa(Isa::Avx2), best);
  EXPECT_STREQ(isa_name(Isa::Scalar), "scalar");
}
