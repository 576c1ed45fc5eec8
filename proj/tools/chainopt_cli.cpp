#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "chainopt/arch.hpp"
#include "chainopt/checks.hpp"
#include "chainopt/oracles.hpp"
#include "chainopt/report.hpp"
#include "chainopt/trainer.hpp"

using namespace chainopt;

namespace {

constexpr int kPass = 0, kFail = 1, kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SmoothOpts {
  std::string arch, compare;
  double eps = 0.0, R = 0.0, x0norm = -1.0, max_rel = -1.0;
  Index m = 0;
};

ArchFile load_with_overrides(const std::string& path, const SmoothOpts& o) {
  ArchFile a = load_arch(path);
  if (o.m > 0) a.spec.batch = o.m;
  if (o.R > 0) a.radii = {o.R};
  if (o.x0norm >= 0) a.x0_norm = o.x0norm;
  if (o.eps > 0)
    for (auto& L : a.spec.layers)
      for (auto& act : L.acts)
        if (act.kind == ActKind::BatchNorm) act.eps = o.eps;
  return a;
}

bool uses_shifted_softplus(const ChainSpec& s) {
  for (const auto& L : s.layers)
    for (const auto& a : L.acts)
      if (a.kind == ActKind::ShiftedSoftplus) return true;
  return false;
}

int cmd_smoothness(const SmoothOpts& o) {
  const ArchFile a = load_with_overrides(o.arch, o);
  const SmoothReport ra = smoothness_report(o.arch, a.spec, a.domain());
  print_report(std::cout, ra);
  if (uses_shifted_softplus(a.spec)) {
    ChainSpec alt = a.spec;
    for (auto& L : alt.layers)
      for (auto& act : L.acts)
        if (act.kind == ActKind::ShiftedSoftplus) act.kind = ActKind::Softplus;
    const SmoothReport rt = smoothness_report(o.arch + " [softplus with offset]", alt, a.domain());
    std::cout << "note: with log(1+e^x) in place of softplus0: log l = " << log12(rt.out.ell)
              << ", log L = " << log12(rt.out.L) << '\n';
  }
  if (o.compare.empty()) return kPass;
  const ArchFile b = load_with_overrides(o.compare, o);
  const SmoothReport rb = smoothness_report(o.compare, b.spec, b.domain());
  print_report(std::cout, rb);
  const Comparison c = compare(ra, rb);
  print_comparison(std::cout, c);
  // |l_a - l_b| / l_a from the log difference
  const double rel = std::isnan(c.dlog_ell) ? 0.0 : std::abs(std::expm1(c.dlog_ell));
  std::printf("relative Lipschitz difference |l_a - l_b| / l_a = %.6g\n", rel);
  if (o.max_rel >= 0) {
    const bool ok = rel <= o.max_rel;
    std::printf("%s: relative difference %s %.3g\n", ok ? "PASS" : "FAIL", ok ? "<=" : ">", o.max_rel);
    return ok ? kPass : kFail;
  }
  return kPass;
}

int cmd_gradcheck(const std::string& path, std::uint64_t seed, double tol) {
  const ArchFile a = load_arch(path);
  const Chain chain = build_chain(a.spec);
  std::mt19937_64 rng(seed);
  const Vector u = project_domain(chain, random_params(chain, rng), a.domain());
  const Vector x0 = synthetic_input(chain, a.spec.input.size() * a.spec.batch, a.x0_norm, rng);
  const Index q = chain.output_dim() / a.spec.batch;
  const auto h = synthetic_objective(a.objective, q, a.spec.batch, rng);
  const auto rows = gradcheck(chain, *h, x0, u, rng, tol);
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-4s %.3e  %s\n", r.pass ? "ok" : "FAIL", r.rel_err, r.what.c_str());
    ok = ok && r.pass;
  }
  std::printf("%s: %zu checks, tolerance %.1e\n", ok ? "PASS" : "FAIL", rows.size(), tol);
  return ok ? kPass : kFail;
}

struct BenchOpts {
  std::vector<int> taus{1, 2, 4, 8, 16, 32};
  Index width = 4, batch = 2;
  std::uint64_t seed = 0;
  int repeats = 5;
  std::string out;
};

template <class F>
double time_ms(F&& f, int repeats) {
  double best = 1e300;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

int cmd_oracle_bench(const BenchOpts& o) {
  std::ostringstream csv;
  csv << "tau,params,dp_ms,dense_ms,dual_ms,dp_vs_dense,dual_vs_dense,dual_calls,call_budget\n";
  bool ok = true;
  for (int tau : o.taus) {
    if (tau < 1) throw UsageError("tau must be >= 1");
    ChainSpec spec;
    spec.input = {o.width, 1, 1};
    spec.batch = o.batch;
    for (int t = 0; t < tau; ++t) spec.layers.push_back({BiKind::FullyConnected, o.width, 1, 1, 1, 1, 0, 0,
                                                         {ActSpec{ActKind::Softplus}}, false});
    const Chain chain = build_chain(spec);
    std::mt19937_64 rng(o.seed + std::uint64_t(tau));
    const Vector u = random_params(chain, rng);
    const Vector x0 = random_vector(chain.input_dim(), rng);
    const auto h = make_squared(random_vector(chain.output_dim(), rng), o.batch);
    const auto r = make_ridge(0.1);
    const Tape tape = forward(chain, x0, u);
    LQProblem nt = build_lq(tape, *h, *r, OracleKind::Newton, 1.0);
    const LQProblem gn = build_lq(tape, *h, *r, OracleKind::GaussNewton, 1.0);
    OracleStep dp, dense, dual, dense_gn;
    const double dp_ms = time_ms([&] { dp = solve_newton_dp(nt); }, o.repeats);
    double dense_ms = std::nan("");
    double e_dp = std::nan(""), e_dual = std::nan("");
    nt.kappa = dp.kappa;  // the dense solve uses the regularisation the DP settled on
    if (nt.total_params() + nt.total_states() <= 2000) {
      dense_ms = time_ms([&] { dense = solve_dense_reference(nt); }, o.repeats);
      dense_gn = solve_dense_reference(gn);
    }
    tape.reset_calls();
    const double dual_ms = time_ms([&] {
      tape.reset_calls();
      dual = solve_gauss_newton_dual(tape, *h, *r, 1.0);
    }, o.repeats);
    if (dense.v.size()) {
      e_dp = rel_error(dp.v, dense.v);
      e_dual = rel_error(dual.v, dense_gn.v);
      ok = ok && e_dp <= 1e-8 && e_dual <= 1e-6;
    }
    const Index budget = 2 * chain.output_dim() + 1;
    ok = ok && Index(dual.autodiff_calls) <= budget;
    csv << tau << ',' << chain.total_params() << ',' << dp_ms << ',' << dense_ms << ',' << dual_ms << ',' << e_dp
        << ',' << e_dual << ',' << dual.autodiff_calls << ',' << budget << '\n';
  }
  if (o.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(o.out);
    if (!f) throw UsageError("cannot write " + o.out);
    f << csv.str();
    std::cout << "wrote " << o.out << '\n';
  }
  std::cout << (ok ? "PASS" : "FAIL") << ": oracle agreement and call budget\n";
  return ok ? kPass : kFail;
}

struct TrainOpts {
  std::string arch, out;
  int steps = 100;
  double gamma = 0.0;
  bool gamma_set = false;
  Index batch = 0;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOpts& o) {
  if (o.gamma_set && !(o.gamma > 0)) throw UsageError("--gamma must be positive");
  if (o.steps < 1) throw UsageError("--steps must be >= 1");
  if (o.batch < 0) throw UsageError("--batch must be >= 0");
  const ArchFile a = load_arch(o.arch);
  const Chain chain = build_chain(a.spec);
  std::mt19937_64 rng(o.seed);
  const Vector x0 = synthetic_input(chain, a.spec.input.size() * a.spec.batch, a.x0_norm, rng);
  const Index q = chain.output_dim() / a.spec.batch;
  const std::string kind = a.objective == "none" ? "squared" : a.objective;
  const auto h = synthetic_objective(kind, q, a.spec.batch, rng);
  const auto r = make_zero_regularizer();
  TrainConfig cfg;
  cfg.dom = a.domain();
  cfg.steps = o.steps;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  if (o.gamma_set) {
    cfg.policy = StepPolicy::User;
    cfg.gamma = o.gamma;
  } else {
    LossContext ctx;
    ctx.n = a.spec.batch;
    if (kind == "squared") {
      ctx.rho_c = propagate_chain(catalog_constants(a.spec), cfg.dom).out.m.to_double();
      ctx.rho_y = h->gradient(Vector::Zero(chain.output_dim())).norm() * double(a.spec.batch);
    }
    cfg.certified_L = certify_objective(a.spec, cfg.dom, chain, *h, loss_constants(kind, ctx), 0.0, x0);
    std::cout << "certified log L_F = " << log12(cfg.certified_L) << '\n';
  }
  const Vector u0 = project_domain(chain, random_params(chain, rng), cfg.dom);
  const bool stochastic = o.batch > 0;
  const TrainTrace tr = stochastic ? train_sgd(chain, *h, *r, x0, u0, cfg) : train_pgd(chain, *h, *r, x0, u0, cfg);
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw UsageError("cannot write " + o.out);
    tr.write_csv(f);
  } else {
    tr.write_csv(std::cout);
  }
  double best = tr.mapping_norm[0];
  bool monotone = true;
  for (size_t k = 1; k < tr.value.size(); ++k) {
    best = std::min(best, tr.mapping_norm[k]);
    monotone = monotone && tr.value[k] <= tr.value[k - 1] + 1e-12 * std::max(1.0, std::abs(tr.value[k - 1]));
  }
  std::printf("gamma %.6g, iterations %zu, F(u0) %.10g, F(last) %.10g, min mapping norm %.6g\n", tr.gamma,
              tr.value.size(), tr.value.front(), tr.value.back(), best);
  if (!stochastic && !o.gamma_set) {
    std::printf("%s: objective %s along the certified full-batch run\n", monotone ? "PASS" : "FAIL",
                monotone ? "nonincreasing" : "increased");
    return monotone ? kPass : kFail;
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chainopt: chains of computations, oracles and smoothness bounds"};
  app.require_subcommand(1);

  SmoothOpts so;
  auto* sm = app.add_subcommand("smoothness", "propagate smoothness constants through an architecture");
  sm->add_option("arch", so.arch, "architecture file")->required()->check(CLI::ExistingFile);
  sm->add_option("--compare", so.compare, "second architecture to compare against")->check(CLI::ExistingFile);
  sm->add_option("--eps", so.eps, "batch-norm epsilon override")->check(CLI::PositiveNumber);
  sm->add_option("-m,--batch", so.m, "mini-batch size override")->check(CLI::PositiveNumber);
  sm->add_option("-R,--radius", so.R, "parameter ball radius override")->check(CLI::PositiveNumber);
  sm->add_option("--x0norm", so.x0norm, "input norm override")->check(CLI::NonNegativeNumber);
  sm->add_option("--max-rel-diff", so.max_rel, "fail unless |l_a - l_b| / l_a is at most this");

  std::string gc_arch;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-5;
  auto* gc = app.add_subcommand("gradcheck", "compare derivatives with central differences");
  gc->add_option("arch", gc_arch, "architecture file")->required()->check(CLI::ExistingFile);
  gc->add_option("--seed", gc_seed, "random seed");
  gc->add_option("--tol", gc_tol, "relative error tolerance")->check(CLI::PositiveNumber);

  BenchOpts bo;
  auto* ob = app.add_subcommand("oracle-bench", "time Newton DP, dual CG and dense solves against tau");
  ob->add_option("--taus", bo.taus, "chain lengths")->delimiter(',');
  ob->add_option("--width", bo.width, "features per layer")->check(CLI::PositiveNumber);
  ob->add_option("--batch", bo.batch, "samples")->check(CLI::PositiveNumber);
  ob->add_option("--seed", bo.seed, "random seed");
  ob->add_option("--repeats", bo.repeats, "timing repeats (best is kept)")->check(CLI::PositiveNumber);
  ob->add_option("--out", bo.out, "CSV output path");

  TrainOpts to;
  auto* tr = app.add_subcommand("train", "projected (stochastic) gradient descent on synthetic data");
  tr->add_option("arch", to.arch, "architecture file")->required()->check(CLI::ExistingFile);
  tr->add_option("--steps", to.steps, "iteration budget");
  auto* g = tr->add_option("--gamma", to.gamma, "fixed step size");
  auto* c = tr->add_flag("--certified", "step 1/L_F (1/(2 L_F) with --batch) from the smoothness bound (default)");
  g->excludes(c);
  tr->add_option("--batch", to.batch, "mini-batch size, 0 for full batch");
  tr->add_option("--seed", to.seed, "random seed");
  tr->add_option("--out", to.out, "trace CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  to.gamma_set = g->count() > 0;

  try {
    if (*sm) return cmd_smoothness(so);
    if (*gc) return cmd_gradcheck(gc_arch, gc_seed, gc_tol);
    if (*ob) return cmd_oracle_bench(bo);
    if (*tr) return cmd_train(to);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ArchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NotSmooth& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
  return kUsage;
}
