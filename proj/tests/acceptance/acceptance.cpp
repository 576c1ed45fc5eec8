// One PASS/FAIL line per acceptance criterion; exit code 1 when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "chainopt/arch.hpp"
#include "chainopt/oracles.hpp"
#include "chainopt/report.hpp"
#include "chainopt/trainer.hpp"
#include "test_util.hpp"

using namespace chainopt;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void run(int id, const char* what, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && s >= limit_s) {
    o.pass = false;
    o.detail += " (over the " + std::to_string(int(limit_s)) + " s budget)";
  }
  std::printf("%s %d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, what, o.detail.c_str(), s);
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

testutil::SpecOptions smooth_options(Index max_dim) {
  testutil::SpecOptions o;
  o.max_layers = 4;
  o.max_dim = max_dim;
  return o;
}

// Chain, input and objective for the oracle criteria.
struct OracleInstance {
  Chain chain;
  Vector x0, u;
  std::unique_ptr<Objective> h;
};

OracleInstance oracle_instance(std::mt19937_64& rng, int k) {
  testutil::SpecOptions o = smooth_options(6);
  o.max_layers = 3;
  o.softmax_head = false;
  OracleInstance in;
  in.chain = build_chain(testutil::random_spec(rng, o));
  in.u = random_params(in.chain, rng);
  in.x0 = random_vector(in.chain.input_dim(), rng);
  in.h = synthetic_objective(k % 2 ? "logistic" : "squared", in.chain.output_dim(), 1, rng);
  return in;
}

Outcome gradients() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Chain c = build_chain(testutil::random_spec(rng, smooth_options(8)));
    const Vector u = random_params(c, rng), x0 = random_vector(c.input_dim(), rng);
    const Vector mu = random_vector(c.output_dim(), rng);
    const Vector g = backward(forward(c, x0, u), mu).g;
    const Vector fd = fd_gradient([&](const Vector& v) { return mu.dot(forward(c, x0, v).output()); }, u, 1e-6);
    worst = std::max(worst, rel_error(g, fd));
  }
  return {worst <= 1e-5, fmt("50 chains, worst relative error %.2e", worst)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(202);
  double dp_worst = 0.0, gn_worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    auto in = oracle_instance(rng, k);
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.1);
    const LQProblem lq = build_lq(tape, *in.h, *r, OracleKind::Newton, 1.0);
    const OracleStep dp = solve_newton_dp(lq);
    LQProblem at = lq;
    at.kappa = dp.kappa;
    const Vector dense = solve_dense_reference(at).v;
    dp_worst = std::max(dp_worst, (dp.v - dense).norm() / (1 + dense.norm()));
  }
  for (int k = 0; k < 20; ++k) {
    auto in = oracle_instance(rng, k);
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.1);
    const Vector dense = solve_dense_reference(build_lq(tape, *in.h, *r, OracleKind::GaussNewton, 1.0)).v;
    gn_worst = std::max(gn_worst, rel_error(solve_gauss_newton_dual(tape, *in.h, *r, 1.0).v, dense));
  }
  return {dp_worst <= 1e-8 && gn_worst <= 1e-6,
          fmt("newton dp vs dense %.2e (<= 1e-8), gauss-newton dual vs dense %.2e (<= 1e-6)", dp_worst, gn_worst)};
}

Outcome call_budget() {
  std::mt19937_64 rng(303);
  int over = 0;
  std::uint64_t worst_calls = 0, worst_budget = 0;
  for (int k = 0; k < 20; ++k) {
    auto in = oracle_instance(rng, k);
    Tape tape = forward(in.chain, in.x0, in.u);
    auto r = make_ridge(0.1);
    const OracleStep s = solve_gauss_newton_dual(tape, *in.h, *r, 1.0);
    const std::uint64_t budget = 2 * std::uint64_t(in.chain.output_dim()) + 1;
    over += s.autodiff_calls > budget;
    if (s.autodiff_calls >= worst_calls) {
      worst_calls = s.autodiff_calls;
      worst_budget = budget;
    }
  }
  return {over == 0, fmt("20 dual solves, %g over budget, largest count %g of 2 d + 1 = %g", over,
                         double(worst_calls), double(worst_budget))};
}

Outcome bound_validity() {
  std::mt19937_64 rng(404);
  testutil::SpecOptions o = smooth_options(6);
  o.nonsmooth = true;
  int violations = 0, pairs = 0;
  double ws = 0.0, wl = 0.0;
  for (int k = 0; k < 200; ++k) {
    const ChainSpec spec = testutil::random_spec(rng, o);
    const auto r = testutil::check_bounds(spec, testutil::random_domain(spec, rng), rng, 200);
    violations += r.violations;
    pairs += r.pairs;
    ws = std::max(ws, r.worst_slope);
    wl = std::max(wl, r.worst_smooth);
  }
  return {violations == 0 && pairs > 0,
          fmt("%g pairs, %g violations, worst slope/l %.3f", pairs, violations, ws) + fmt(", worst ratio/L %.3f", wl)};
}

ChainSpec with_eps(ChainSpec s, double eps) {
  for (auto& L : s.layers)
    for (auto& a : L.acts)
      if (a.kind == ActKind::BatchNorm) a.eps = eps;
  return s;
}

Outcome vgg() {
  const std::string dir = CHAINOPT_ARCH_DIR;
  const ArchFile relu = load_arch(dir + "/vgg16.arch"), smooth = load_arch(dir + "/vgg16-smooth.arch"),
                 bn = load_arch(dir + "/vgg16-batchnorm.arch");
  const BoundedDomain dom = BoundedDomain::uniform(16, 1.0, 1.0);
  if (relu.spec.batch != 128 || smooth.spec.batch != 128 || bn.spec.batch != 128) return {false, "fixture batch != 128"};
  const auto a = smoothness_report("vgg16", relu.spec, dom);
  const auto b = smoothness_report("vgg16-smooth", smooth.spec, dom);
  const auto lo = smoothness_report("bn", with_eps(bn.spec, 1e-2), dom);
  const auto hi = smoothness_report("bn", with_eps(bn.spec, 1e2), dom);
  const double da = std::abs(compare(a, b).dlog_ell);
  const bool pa = da <= std::log1p(1e-4);
  const bool pb = b.out.ell <= lo.out.ell && b.out.L <= lo.out.L;
  const bool pc = b.out.ell >= hi.out.ell && b.out.L >= hi.out.L;
  std::string d = fmt("(a) |dlog l| = %.3g; ", da);
  d += fmt("(b) eps=1e-2 dlog l %.4g, dlog L %.4g; ", lo.out.ell.log() - b.out.ell.log(), lo.out.L.log() - b.out.L.log());
  d += fmt("(c) eps=1e2 dlog l %.4g, dlog L %.4g", hi.out.ell.log() - b.out.ell.log(), hi.out.L.log() - b.out.L.log());
  return {pa && pb && pc, d};
}

bool has_padded_conv(const ChainSpec& s) {
  for (const auto& L : s.layers)
    if (L.kind == BiKind::Conv && (L.ph > 0 || L.pw > 0)) return true;
  return false;
}

bool has_act(const ChainSpec& s, ActKind k) {
  for (const auto& L : s.layers)
    for (const auto& a : L.acts)
      if (a.kind == k) return true;
  return false;
}

Outcome backward_cost() {
  std::mt19937_64 rng(606);
  testutil::SpecOptions o = smooth_options(8);
  o.nonsmooth = true;
  // the first three chains are drawn until they cover padded conv, batch-norm and softmax
  const std::vector<std::function<bool(const ChainSpec&)>> want = {
      has_padded_conv, [](const ChainSpec& s) { return has_act(s, ActKind::BatchNorm); },
      [](const ChainSpec& s) { return has_act(s, ActKind::Softmax); }};
  int equal = 0;
  std::uint64_t total = 0;
  for (int k = 0; k < 10; ++k) {
    ChainSpec spec = testutil::random_spec(rng, o);
    while (k < int(want.size()) && !want[size_t(k)](spec)) spec = testutil::random_spec(rng, o);
    const Chain c = build_chain(spec);
    const OpCount oc = count_backward_cost(c, random_vector(c.input_dim(), rng), random_params(c, rng));
    equal += oc.measured == oc.formula;
    total += oc.measured;
  }
  return {equal == 10, fmt("%g of 10 chains equal (padded conv, batch-norm and softmax covered), %g units", equal,
                           double(total))};
}

Outcome implicit_bound() {
  std::mt19937_64 rng(707);
  int violations = 0, probes = 0;
  double worst = 0.0;
  for (int k = 0; k < 30; ++k) {
    const InnerProblem p = testutil::random_logcosh(rng, testutil::uniform_int(rng, 1, 4), testutil::uniform_int(rng, 1, 4));
    for (double e : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
      const auto r = testutil::probe_implicit(p, e, rng);
      ++probes;
      violations += r.error > r.bound;
      if (r.bound > 0) worst = std::max(worst, r.error / r.bound);
    }
  }
  return {violations == 0, fmt("%g probes, %g violations, worst error/bound %.3g", probes, violations, worst)};
}

Outcome convergence() {
  std::mt19937_64 rng(808);
  int nonmono = 0, shape = 0;
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    ChainSpec s;
    s.input = {testutil::uniform_int(rng, 2, 4), 1, 1};
    s.batch = 4;
    for (int t = 0; t < 2; ++t) {
      LayerSpec L;
      L.out = testutil::uniform_int(rng, 2, 4);
      L.acts.push_back({ActKind::Softplus});
      s.layers.push_back(L);
    }
    const Chain c = build_chain(s);
    const BoundedDomain dom = BoundedDomain::uniform(2, 1.0);
    Vector x0 = random_vector(c.input_dim(), rng);
    x0 /= x0.norm();
    auto h = synthetic_objective("logistic", s.layers.back().out, s.batch, rng);
    auto r = make_zero_regularizer();
    TrainConfig cfg;
    cfg.dom = dom;
    cfg.certified_L = certify_objective(s, dom, c, *h, loss_constants("logistic"), 0.0, x0);
    cfg.steps = 200;
    const Vector u0 = testutil::in_domain(c, dom, rng);
    const TrainTrace tr = train_pgd(c, *h, *r, x0, u0, cfg);
    TrainConfig base = cfg;
    base.steps = 20000;
    const TrainTrace bl = train_pgd(c, *h, *r, x0, u0, base);
    const double fstar = std::min(*std::min_element(bl.value.begin(), bl.value.end()),
                                  *std::min_element(tr.value.begin(), tr.value.end()));
    const double LF = cfg.certified_L.to_double();
    for (size_t i = 1; i < tr.value.size(); ++i) nonmono += tr.value[i] > tr.value[i - 1] + 1e-12;
    double best = tr.mapping_norm[0] * tr.mapping_norm[0];
    for (size_t i = 1; i < tr.mapping_norm.size(); ++i) {
      best = std::min(best, tr.mapping_norm[i] * tr.mapping_norm[i]);
      const double kk = double(i + 1);  // iterations done
      if (kk < 10) continue;
      const double rhs = 8.0 * LF * (tr.value[0] - fstar) / kk;
      shape += best > rhs;
      if (rhs > 0) worst = std::max(worst, best / rhs);
    }
  }
  return {nonmono == 0 && shape == 0,
          fmt("10 instances, %g non-monotone steps, %g shape violations, worst ratio %.3g", nonmono, shape, worst)};
}

// Largest |grad| and finite-difference Hessian norm of a vector map over random probes.
struct ProbeMax {
  double grad = 0.0, hess = 0.0;
};

// Jacobian transpose of a (in x out) and its finite-difference derivative as a tensor.
ProbeMax probe_activation(const Activation& a, std::mt19937_64& rng, int probes) {
  ProbeMax m;
  const Index n = a.in_dim();
  const double h = 1e-5;
  for (int k = 0; k < probes; ++k) {
    const Vector z = random_vector(n, rng, std::pow(10.0, testutil::uniform(rng, -1, 1)));
    m.grad = std::max(m.grad, operator_norm(activation_jacobian_t(a, z)));
    Tensor3 H(n, n, a.out_dim());
    for (Index j = 0; j < n; ++j) {
      Vector zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      const Matrix D = (activation_jacobian_t(a, zp) - activation_jacobian_t(a, zm)) / (2 * h);  // in x out
      for (Index o = 0; o < a.out_dim(); ++o)
        for (Index i = 0; i < n; ++i) H(i, j, o) = D(i, o);
    }
    m.hess = std::max(m.hess, tensor_norm_222(H, 4, 1e-10, std::uint64_t(k)).value);
  }
  return m;
}

ProbeMax probe_objective(const Objective& f, Index dim, std::mt19937_64& rng, int probes, double h) {
  ProbeMax m;
  for (int k = 0; k < probes; ++k) {
    const Vector y = random_vector(dim, rng, std::pow(10.0, testutil::uniform(rng, -1, 1)));
    m.grad = std::max(m.grad, f.gradient(y).norm());
    Matrix H(dim, dim);
    for (Index j = 0; j < dim; ++j) {
      Vector yp = y, ym = y;
      yp(j) += h;
      ym(j) -= h;
      H.col(j) = (f.gradient(yp) - f.gradient(ym)) / (2 * h);
    }
    m.hess = std::max(m.hess, operator_norm(0.5 * (H + H.transpose())));
  }
  return m;
}

Outcome loss_constants_conformance() {
  std::mt19937_64 rng(909);
  const int N = 1000;
  bool ok = true;
  std::string d;
  auto record = [&](const char* name, ProbeMax got, double lg, double lh) {
    const bool p = got.grad <= lg && got.hess <= lh;
    ok = ok && p;
    d += std::string(name) + fmt(" grad %.3g<=%.3g hess %.3g", got.grad, lg, got.hess) + fmt("<=%.3g; ", lh);
  };
  {
    ProbeMax mx;
    for (int k = 0; k < N; ++k) {
      const Index q = testutil::uniform_int(rng, 2, 5), n = testutil::uniform_int(rng, 1, 3);
      Vector y = Vector::Zero(q * n);
      for (Index i = 0; i < n; ++i) y(i * q + testutil::uniform_int(rng, 0, q - 1)) = 1.0;
      auto h = make_logistic(y, n);
      const ProbeMax p = probe_objective(*h, q * n, rng, 1, 1e-5);
      mx.grad = std::max(mx.grad, p.grad);
      mx.hess = std::max(mx.hess, p.hess);
    }
    record("logistic", mx, 2.0, 2.0);
  }
  {
    ProbeMax mx;
    for (int k = 0; k < N; ++k) {
      auto a = make_softmax(testutil::uniform_int(rng, 2, 5), testutil::uniform_int(rng, 1, 2));
      const ProbeMax p = probe_activation(*a, rng, 1);
      mx.grad = std::max(mx.grad, p.grad);
      mx.hess = std::max(mx.hess, p.hess);
    }
    record("softmax", mx, 2.0, 4.0);
  }
  {
    // ratios to the catalog constants, since they depend on eps and m
    ProbeMax mx;
    for (int k = 0; k < N; ++k) {
      const Index delta = testutil::uniform_int(rng, 1, 3), m = testutil::uniform_int(rng, 2, 4);
      const double eps = std::pow(10.0, testutil::uniform(rng, -2, 2));
      auto a = make_batchnorm(delta, m, eps);
      const ProbeMax p = probe_activation(*a, rng, 1);
      mx.grad = std::max(mx.grad, p.grad / (2.0 / std::sqrt(eps)));
      mx.hess = std::max(mx.hess, p.hess / (2.0 / (std::sqrt(double(m)) * eps)));
    }
    record("batchnorm (ratio)", mx, 1.0, 1.0);
  }
  {
    // gradient against the stated n(n-1)/2 and against the catalog constant separately
    ProbeMax stated, catalog;
    int over_stated = 0, over_n2 = 0;
    for (int k = 0; k < N; ++k) {
      const Index q = testutil::uniform_int(rng, 1, 3), n = testutil::uniform_int(rng, 2, 5);
      auto h = make_convex_cluster(q, n, 1e-13);
      const ProbeMax p = probe_objective(*h, q * n, rng, 1, 1e-4);
      const double pairs = double(n * (n - 1)) / 2;
      over_stated += p.grad > pairs;
      over_n2 += p.grad > pairs && n == 2;
      stated.grad = std::max(stated.grad, p.grad / pairs);
      stated.hess = std::max(stated.hess, p.hess);
      catalog.grad = std::max(catalog.grad, p.grad / loss_constants("convex-cluster", {0, 0, n}).ell.to_double());
    }
    catalog.hess = stated.hess;
    record("convex-cluster grad/(n(n-1)/2)", stated, 1.0, 1.0);
    d += fmt("%g probes above n(n-1)/2, %g of them at n = 2; ", over_stated, over_n2);
    d += fmt("against the catalog constant grad ratio %.3g", catalog.grad);
  }
  return {ok, d};
}

}  // namespace

int main() {
  run(1, "gradient correctness", 10, gradients);
  run(2, "oracle equivalence", 30, oracle_equivalence);
  run(3, "gauss-newton call budget", 0, call_budget);
  run(4, "smoothness bound validity", 60, bound_validity);
  run(5, "vgg constant comparisons", 1, vgg);
  run(6, "backward cost accounting", 0, backward_cost);
  run(7, "implicit gradient bound", 0, implicit_bound);
  run(8, "projected gradient convergence", 60, convergence);
  run(9, "loss constant conformance", 0, loss_constants_conformance);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
