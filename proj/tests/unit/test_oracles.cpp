#include <gtest/gtest.h>

#include <random>

#include "chainopt/checks.hpp"
#include "chainopt/oracles.hpp"
#include "test_util.hpp"

using namespace chainopt;
using testutil::random_matrix;
using testutil::uniform_int;

namespace {

Matrix random_psd(Index n, std::mt19937_64& rng, double shift = 0.0) {
  const Matrix G = random_matrix(n, n, rng);
  return G * G.transpose() / double(n) + shift * Matrix::Identity(n, n);
}

// Random strongly convex LQ problem: P, Q positive semidefinite, R small, kappa >= 1.
LQProblem random_lq(std::mt19937_64& rng, Index tau, Index max_dim) {
  LQProblem lq;
  lq.kappa = testutil::uniform(rng, 1.0, 3.0);
  Index dprev = uniform_int(rng, 1, max_dim);
  for (Index t = 1; t <= tau; ++t) {
    const Index d = uniform_int(rng, 1, max_dim), p = uniform_int(rng, 1, max_dim);
    lq.A.push_back(random_matrix(d, dprev, rng, 0.7));
    lq.B.push_back(random_matrix(d, p, rng));
    lq.P.push_back(random_psd(d, rng));
    lq.p.push_back(random_vector(d, rng));
    lq.Q.push_back(random_psd(p, rng));
    lq.q.push_back(random_vector(p, rng));
    lq.R.push_back(t == 1 ? Matrix::Zero(dprev, p) : random_matrix(dprev, p, rng, 0.1));
    dprev = d;
  }
  return lq;
}

struct Instance {
  Chain chain;
  Vector x0, u;
  std::unique_ptr<Objective> h;
};

Instance smooth_instance(std::mt19937_64& rng, const std::string& loss) {
  testutil::SpecOptions o;
  o.max_layers = 3;
  o.max_dim = 6;
  o.softmax_head = false;
  Instance in;
  in.chain = build_chain(testutil::random_spec(rng, o));
  in.u = random_params(in.chain, rng);
  in.x0 = random_vector(in.chain.input_dim(), rng);
  in.h = synthetic_objective(loss, in.chain.output_dim(), 1, rng);
  return in;
}

}  // namespace

TEST(Oracles, GradientKindHasNoQuadraticTerms) {
  std::mt19937_64 rng(1);
  auto in = smooth_instance(rng, "squared");
  Tape tape = forward(in.chain, in.x0, in.u);
  auto r = make_ridge(0.3);
  const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Gradient, 1.0);
  for (Index t = 0; t < lq.tau(); ++t) {
    EXPECT_EQ(lq.P[t].norm(), 0.0);
    EXPECT_EQ(lq.Q[t].norm(), 0.0);
    EXPECT_EQ(lq.R[t].norm(), 0.0);
  }
}

TEST(Oracles, GaussNewtonKindOnlyTerminalCurvature) {
  std::mt19937_64 rng(2);
  auto in = smooth_instance(rng, "squared");
  Tape tape = forward(in.chain, in.x0, in.u);
  auto r = make_zero_regularizer();
  const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::GaussNewton, 1.0);
  const Index T = lq.tau();
  for (Index t = 0; t < T; ++t) {
    EXPECT_EQ(lq.Q[t].norm(), 0.0);
    EXPECT_EQ(lq.R[t].norm(), 0.0);
    if (t + 1 < T) {
      EXPECT_EQ(lq.P[t].norm(), 0.0);
    }
  }
  EXPECT_LE((lq.P[T - 1] - in.h->hessian(tape.output())).norm(), 0.0);
}

TEST(Oracles, NewtonOnBiAffineChainIsBilinearContraction) {
  ChainSpec s;
  s.input = {3, 1, 1};
  s.batch = 2;
  for (Index w : {4, 2}) {
    LayerSpec L;
    L.out = w;
    s.layers.push_back(L);
  }
  Chain c = build_chain(s);
  std::mt19937_64 rng(3);
  const Vector u = random_params(c, rng), x0 = random_vector(c.input_dim(), rng);
  auto h = synthetic_objective("squared", c.output_dim(), 1, rng);
  Tape tape = forward(c, x0, u);
  auto r = make_zero_regularizer();
  const LQProblem lq = build_lq(tape, *h, *r, OracleKind::Newton, 1.0);
  // lambda_2 = grad h, lambda_1 = grad_x phi_2 lambda_2
  const Vector l2 = h->gradient(tape.output());
  const Vector l1 = tape.linearization(1).vjp(l2, nullptr).first;
  const auto& b1 = static_cast<const BiAffineLayer&>(c.layer(0)).biaffine();
  const auto& b2 = static_cast<const BiAffineLayer&>(c.layer(1)).biaffine();
  EXPECT_LE((lq.R[0] - b1.bilinear_contract(l1)).norm(), 1e-14);
  EXPECT_LE((lq.R[1] - b2.bilinear_contract(l2)).norm(), 1e-14);
  EXPECT_EQ(lq.P[0].norm(), 0.0);
  EXPECT_EQ(lq.Q[0].norm(), 0.0);
  EXPECT_EQ(lq.Q[1].norm(), 0.0);
}

TEST(Oracles, GradientStepEqualsScaledGradient) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 10; ++k) {
    auto in = smooth_instance(rng, k % 2 ? "logistic" : "squared");
    auto r = make_ridge(0.2);
    Tape tape = forward(in.chain, in.x0, in.u);
    const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Gradient, 1.0);
    const double gamma = 0.37;
    const Vector g = grad_objective(in.chain, in.x0, in.u, *in.h).grad + r->gradient(in.u);
    EXPECT_LE((solve_gradient_step(lq, gamma).v + gamma * g).norm(), 1e-12 * (1 + g.norm()));
    EXPECT_EQ(solve_gradient_step(lq, 0.0).v.norm(), 0.0);
  }
}

TEST(Oracles, ZeroGradientsGiveZeroStep) {
  std::mt19937_64 rng(5);
  LQProblem lq = random_lq(rng, 3, 4);
  for (auto& p : lq.p) p.setZero();
  for (auto& q : lq.q) q.setZero();
  EXPECT_EQ(solve_gradient_step(lq, 1.0).v.norm(), 0.0);
  EXPECT_LE(solve_newton_dp(lq).v.norm(), 1e-14);
}

TEST(Oracles, SingleStageClosedForm) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 10; ++k) {
    LQProblem lq = random_lq(rng, 1, 6);
    lq.A[0].setZero();
    const Index p = lq.param_dim(1);
    const Matrix H = lq.kappa * Matrix::Identity(p, p) + lq.Q[0] + lq.B[0].transpose() * lq.P[0] * lq.B[0];
    const Vector want = -H.ldlt().solve(lq.q[0] + lq.B[0].transpose() * lq.p[0]);
    EXPECT_LE((solve_newton_dp(lq).v - want).norm(), 1e-10 * (1 + want.norm()));
    EXPECT_LE((solve_dense_reference(lq).v - want).norm(), 1e-10 * (1 + want.norm()));
  }
}

TEST(Oracles, DynamicProgrammingMatchesDenseSolve) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 40; ++k) {
    const LQProblem lq = random_lq(rng, uniform_int(rng, 1, 5), 8);
    const Vector dense = solve_dense_reference(lq).v;
    const OracleStep dp = solve_newton_dp(lq);
    EXPECT_EQ(dp.retries, 0);
    EXPECT_LE((dp.v - dense).norm(), 1e-8 * (1 + dense.norm())) << k;
  }
}

TEST(Oracles, FirstOrderProblemReducesToGradientStep) {
  std::mt19937_64 rng(8);
  auto in = smooth_instance(rng, "logistic");
  Tape tape = forward(in.chain, in.x0, in.u);
  auto r = make_zero_regularizer();
  const double kappa = 2.5;
  const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Gradient, kappa);
  const Vector want = solve_gradient_step(lq, 1.0 / kappa).v;
  EXPECT_LE((solve_newton_dp(lq).v - want).norm(), 1e-12 * (1 + want.norm()));
  EXPECT_LE((solve_dense_reference(lq).v - want).norm(), 1e-12 * (1 + want.norm()));
}

TEST(Oracles, NewtonOnChainsMatchesDense) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 20; ++k) {
    auto in = smooth_instance(rng, k % 2 ? "logistic" : "squared");
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.1);
    const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Newton, 1.0);
    const OracleStep dp = solve_newton_dp(lq);
    LQProblem at = lq;
    at.kappa = dp.kappa;
    const Vector dense = solve_dense_reference(at).v;
    EXPECT_LE((dp.v - dense).norm(), 1e-8 * (1 + dense.norm())) << k;
  }
}

TEST(Oracles, NewtonStepIsModelMinimiser) {
  std::mt19937_64 rng(10);
  auto in = smooth_instance(rng, "logistic");
  Tape tape = forward(in.chain, in.x0, in.u);
  auto r = make_ridge(0.1);
  LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Newton, 1.0);
  const OracleStep dp = solve_newton_dp(lq);
  lq.kappa = dp.kappa;
  const double best = lq_value(lq, dp.v);
  for (int k = 0; k < 100; ++k) {
    const Vector d = random_vector(dp.v.size(), rng, std::pow(10.0, testutil::uniform(rng, -4, 0)));
    EXPECT_LE(best, lq_value(lq, dp.v + d) + 1e-12 * (1 + std::abs(best)));
  }
}

TEST(Oracles, NonconvexModelTriggersKappaDoubling) {
  LQProblem lq;
  lq.kappa = 1.0;
  lq.A = {Matrix::Zero(1, 1)};
  lq.B = {Matrix::Identity(1, 1)};
  lq.P = {Matrix::Constant(1, 1, -3.0)};
  lq.p = {Vector::Ones(1)};
  lq.Q = {Matrix::Zero(1, 1)};
  lq.q = {Vector::Zero(1)};
  lq.R = {Matrix::Zero(1, 1)};
  const OracleStep s = solve_newton_dp(lq);
  EXPECT_EQ(s.retries, 2);
  EXPECT_EQ(s.kappa, 4.0);
  EXPECT_DOUBLE_EQ(s.v(0), -1.0);
  EXPECT_THROW(solve_dense_reference(lq), InfeasibleModel);
}

TEST(Oracles, GaussNewtonMatchesDense) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    auto in = smooth_instance(rng, k % 2 ? "logistic" : "squared");
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = k % 3 ? make_ridge(0.2) : make_zero_regularizer();
    const double kappa = testutil::uniform(rng, 0.5, 2.0);
    const Vector dense = solve_dense_reference(build_lq(tape, *in.h, *r, OracleKind::GaussNewton, kappa)).v;
    const OracleStep gn = solve_gauss_newton_dual(tape, *in.h, *r, kappa);
    EXPECT_LE(rel_error(gn.v, dense), 1e-6) << k;
  }
}

TEST(Oracles, GaussNewtonZeroGradientGivesZeroStep) {
  std::mt19937_64 rng(12);
  auto in = smooth_instance(rng, "squared");
  Tape tape = forward(in.chain, in.x0, in.u);
  const Index q = in.chain.output_dim();
  auto h = make_quadratic(Vector::Zero(q), Matrix::Identity(q, q));
  auto r = make_zero_regularizer();
  // gradient of 1/2 |y|^2 vanishes only at y = 0; shift the linear term to cancel it
  auto h0 = make_quadratic(-tape.output(), Matrix::Identity(q, q));
  EXPECT_LE(solve_gauss_newton_dual(tape, *h0, *r, 1.0).v.norm(), 1e-12);
  EXPECT_GT(solve_gauss_newton_dual(tape, *h, *r, 1.0).v.norm(), 0.0);
}

TEST(Oracles, LinearLeastSquaresRidgeSystem) {
  ChainSpec s;
  s.input = {3, 1, 1};
  s.batch = 2;
  LayerSpec L;
  L.out = 2;
  s.layers.push_back(L);
  Chain c = build_chain(s);
  std::mt19937_64 rng(13);
  const Vector u = random_params(c, rng), x0 = random_vector(c.input_dim(), rng);
  const Vector y = random_vector(c.output_dim(), rng);
  auto h = make_quadratic(-y, Matrix::Identity(y.size(), y.size()));  // 1/2|f|^2 - y^T f
  auto r = make_zero_regularizer();
  Tape tape = forward(c, x0, u);
  const double kappa = 0.8;
  // J = d f / d u as a q x p matrix; v* = -(J^T J + kappa I)^{-1} J^T (f - y)
  const auto [Jx, Ju] = layer_jacobians_t(c.layer(0), x0, u);
  const Matrix J = Ju.transpose();
  const Matrix H = J.transpose() * J + kappa * Matrix::Identity(J.cols(), J.cols());
  const Vector want = -H.ldlt().solve(J.transpose() * (tape.output() - y));
  EXPECT_LE(rel_error(solve_gauss_newton_dual(tape, *h, *r, kappa).v, want), 1e-6);
}

TEST(Oracles, GaussNewtonDualityGap) {
  std::mt19937_64 rng(14);
  for (int k = 0; k < 10; ++k) {
    auto in = smooth_instance(rng, k % 2 ? "logistic" : "squared");
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.3);
    const OracleStep gn = solve_gauss_newton_dual(tape, *in.h, *r, 1.0);
    const double primal = gauss_newton_primal(tape, *in.h, *r, 1.0, gn.v);
    const double dual = gauss_newton_dual_value(tape, *in.h, *r, 1.0, gn.mu);
    EXPECT_LE(primal - dual, 1e-8 * (1 + std::abs(primal))) << k;
    EXPECT_GE(primal - dual, -1e-8 * (1 + std::abs(primal))) << k;
  }
}

TEST(Oracles, GaussNewtonCallBudget) {
  std::mt19937_64 rng(15);
  for (int k = 0; k < 10; ++k) {
    auto in = smooth_instance(rng, k % 2 ? "logistic" : "squared");
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.3);
    const OracleStep gn = solve_gauss_newton_dual(tape, *in.h, *r, 1.0);
    EXPECT_LE(gn.autodiff_calls, std::uint64_t(2 * in.chain.output_dim() + 1)) << k;
    EXPECT_LE(gn.cg_iterations, in.chain.output_dim());
  }
}

TEST(Oracles, GaussNewtonRefusesNegativeCurvature) {
  std::mt19937_64 rng(16);
  auto in = smooth_instance(rng, "squared");
  Tape tape = forward(in.chain, in.x0, in.u);
  const Index q = in.chain.output_dim();
  Matrix P = Matrix::Identity(q, q);
  P(0, 0) = -1.0;
  auto h = make_quadratic(Vector::Ones(q), P);
  auto r = make_zero_regularizer();
  EXPECT_THROW(solve_gauss_newton_dual(tape, *h, *r, 1.0), InfeasibleModel);
}

TEST(Oracles, NewtonRefusesReluChains) {
  ChainSpec s;
  s.input = {2, 1, 1};
  LayerSpec L;
  L.out = 2;
  L.acts.push_back({ActKind::ReLU});
  s.layers.push_back(L);
  Chain c = build_chain(s);
  std::mt19937_64 rng(17);
  Tape tape = forward(c, random_vector(2, rng), random_params(c, rng));
  auto h = synthetic_objective("squared", 2, 1, rng);
  auto r = make_zero_regularizer();
  EXPECT_THROW(build_lq(tape, *h, *r, OracleKind::Newton, 1.0), SecondOrderUnavailable);
  EXPECT_NO_THROW(build_lq(tape, *h, *r, OracleKind::GaussNewton, 1.0));
}

TEST(Oracles, DenseReferenceRespectsCap) {
  std::mt19937_64 rng(18);
  const LQProblem lq = random_lq(rng, 3, 8);
  EXPECT_THROW(solve_dense_reference(lq, 2), std::length_error);
}
