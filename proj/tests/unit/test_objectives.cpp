#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "chainopt/checks.hpp"
#include "chainopt/objectives.hpp"
#include "chainopt/smoothness.hpp"
#include "test_util.hpp"

using namespace chainopt;

namespace {

// Minimiser of a convex function of one variable on [lo, hi] by ternary search.
double ternary_min(const std::function<double(double)>& f, double lo, double hi, double& arg) {
  for (int i = 0; i < 200; ++i) {
    const double a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
    if (f(a) < f(b))
      hi = b;
    else
      lo = a;
  }
  arg = 0.5 * (lo + hi);
  return f(arg);
}

Vector one_hot_labels(Index q, Index n, std::mt19937_64& rng) {
  Vector y = Vector::Zero(q * n);
  for (Index i = 0; i < n; ++i) y(i * q + testutil::uniform_int(rng, 0, q - 1)) = 1.0;
  return y;
}

}  // namespace

TEST(Objectives, SquaredExamples) {
  Vector y(2);
  y << 0, 0;
  Vector yh(2);
  yh << 1, 0;
  const ValueGradient a = eval_squared(yh, y, 1);
  EXPECT_EQ(a.value, 0.5);
  EXPECT_EQ(a.grad, yh);
  const ValueGradient b = eval_squared(y, y, 1);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_EQ(b.grad.norm(), 0.0);
}

TEST(Objectives, SquaredMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Index q = 3, n = 4;
  const Vector y = random_vector(q * n, rng), yh = random_vector(q * n, rng);
  const Vector fd = fd_gradient([&](const Vector& v) { return eval_squared(v, y, n).value; }, yh);
  EXPECT_LE(rel_error(eval_squared(yh, y, n).grad, fd), 1e-7);
}

TEST(Objectives, LogisticUniformExample) {
  Vector y(2);
  y << 1, 0;
  const ValueGradient v = eval_logistic(Vector::Zero(2), y, 1);
  EXPECT_NEAR(v.value, std::log(2.0), 1e-15);
  EXPECT_NEAR(v.grad(0), -0.5, 1e-15);
  EXPECT_NEAR(v.grad(1), 0.5, 1e-15);
}

TEST(Objectives, LogisticIsStableForLargeScores) {
  Vector y(2), yh(2);
  y << 0, 1;
  yh << 1000.0, -1000.0;
  const ValueGradient v = eval_logistic(yh, y, 1);
  EXPECT_NEAR(v.value, 2000.0, 1e-9);
  EXPECT_TRUE(v.grad.allFinite());
}

TEST(Objectives, LogisticFiniteDifferencesAndBounds) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const Index q = testutil::uniform_int(rng, 2, 5), n = testutil::uniform_int(rng, 1, 3);
    const Vector y = one_hot_labels(q, n, rng), yh = random_vector(q * n, rng, 3.0);
    const ValueGradient v = eval_logistic(yh, y, n);
    const Vector fd = fd_gradient([&](const Vector& z) { return eval_logistic(z, y, n).value; }, yh);
    EXPECT_LE(rel_error(v.grad, fd), 1e-6);
    EXPECT_LE(v.grad.norm(), 2.0);
  }
}

TEST(Objectives, HessiansMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Index q = 3, n = 2;
  const Vector yh = random_vector(q * n, rng);
  std::vector<std::unique_ptr<Objective>> hs;
  hs.push_back(make_squared(random_vector(q * n, rng), n));
  hs.push_back(make_logistic(one_hot_labels(q, n, rng), n));
  for (const auto& h : hs) {
    const double step = 1e-5;
    Matrix fd(q * n, q * n);
    for (Index j = 0; j < q * n; ++j) {
      Vector a = yh, b = yh;
      a(j) += step;
      b(j) -= step;
      fd.col(j) = (h->gradient(a) - h->gradient(b)) / (2 * step);
    }
    EXPECT_LE((fd - h->hessian(yh)).norm(), 1e-8) << h->name();
  }
}

TEST(Objectives, ClusterSinglePointIsZero) {
  std::mt19937_64 rng(4);
  const ClusterResult r = eval_convex_cluster(random_vector(3, rng), 1);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.grad.norm(), 0.0);
}

TEST(Objectives, ClusterIdenticalPointsIsZero) {
  Vector yh(6);
  yh << 1, 2, 1, 2, 1, 2;
  const ClusterResult r = eval_convex_cluster(yh, 3);
  EXPECT_NEAR(r.value, 0.0, 1e-10);
  EXPECT_LE(r.grad.norm(), 1e-5);
}

TEST(Objectives, ClusterTwoPointsMatchesBruteForce) {
  Vector yh(2);
  yh << 0, 4;
  const ClusterResult r = eval_convex_cluster(yh, 2, 1e-12);
  // inner problem 1/2 (y1 - 0)^2 + 1/2 (y2 - 4)^2 + |y1 - y2| by nested ternary search
  auto inner = [&](double y1) {
    double a;
    return ternary_min([&](double y2) { return 0.5 * y1 * y1 + 0.5 * (y2 - 4) * (y2 - 4) + std::abs(y1 - y2); },
                       -10, 10, a);
  };
  double y1;
  const double best = ternary_min(inner, -10, 10, y1);
  EXPECT_NEAR(r.value, best, 1e-6);
  EXPECT_NEAR(r.y_star(0), y1, 1e-6);
  EXPECT_NEAR(r.grad(0), 0 - y1, 1e-6);
  EXPECT_LE(r.gap, 1e-12);
}

TEST(Objectives, ClusterGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Index q = 2, n = 4;
  const Vector yh = random_vector(q * n, rng, 3.0);
  auto h = make_convex_cluster(q, n, 1e-13);
  const Vector fd = fd_gradient([&](const Vector& v) { return h->value(v); }, yh, 1e-4);
  EXPECT_LE(rel_error(h->gradient(yh), fd), 1e-5);
}

TEST(Objectives, ClusterGradientBoundsAndLipschitz) {
  std::mt19937_64 rng(6);
  const Index q = 2, n = 4;
  auto h = make_convex_cluster(q, n, 1e-12);
  for (int k = 0; k < 30; ++k) {
    const Vector a = random_vector(q * n, rng, 3.0), b = random_vector(q * n, rng, 3.0);
    const Vector ga = h->gradient(a), gb = h->gradient(b);
    EXPECT_LE(ga.norm(), double(n * (n - 1)) / 2);
    EXPECT_LE((ga - gb).norm(), (a - b).norm() * (1 + 1e-6));
  }
}

TEST(Objectives, ClusterTwoFarPointsGradientIsSqrtTwo) {
  Vector yh(2);
  yh << 0, 10;
  const ClusterResult r = eval_convex_cluster(yh, 2, 1e-13);
  // y* = (1, 9), grad = (-1, 1)
  EXPECT_NEAR(r.grad.norm(), std::sqrt(2.0), 1e-9);
  EXPECT_LE(r.grad.norm(), loss_constants("convex-cluster", {0, 0, 2}).ell.to_double() * (1 + 1e-12));
}

TEST(Objectives, SubsetAveragesSelectedSamples) {
  std::mt19937_64 rng(7);
  const Index q = 2, n = 4;
  const Vector y = random_vector(q * n, rng), yh = random_vector(q * n, rng);
  auto h = make_squared(y, n);
  EXPECT_EQ(h->samples(), n);
  auto all = h->subset({0, 1, 2, 3});
  EXPECT_NEAR(all->value(yh), h->value(yh), 1e-15);
  auto one = h->subset({2});
  EXPECT_NEAR(one->value(yh), 0.5 * (yh.segment(4, 2) - y.segment(4, 2)).squaredNorm(), 1e-15);
  auto cc = make_convex_cluster(q, n);
  EXPECT_THROW(cc->subset({0}), std::logic_error);
}

TEST(Objectives, Regularisers) {
  std::mt19937_64 rng(8);
  const Vector u = random_vector(5, rng);
  auto r = make_ridge(0.4);
  EXPECT_NEAR(r->value(u), 0.2 * u.squaredNorm(), 1e-15);
  EXPECT_LE((r->gradient(u) - 0.4 * u).norm(), 1e-15);
  EXPECT_EQ(r->hessian_block(u, 1, 3), 0.4 * Matrix::Identity(3, 3));
  EXPECT_EQ(r->smoothness(), 0.4);
  auto z = make_zero_regularizer();
  EXPECT_EQ(z->value(u), 0.0);
  EXPECT_EQ(z->smoothness(), 0.0);
}
