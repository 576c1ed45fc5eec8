#include "chainopt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace chainopt {

void TrainTrace::write_csv(std::ostream& os) const {
  os << "iter,value,mapping_norm\n";
  os.precision(17);
  for (size_t k = 0; k < value.size(); ++k) os << k << ',' << value[k] << ',' << mapping_norm[k] << '\n';
}

Vector project_domain(const Chain& chain, const Vector& u, const BoundedDomain& dom) {
  dom.validate(chain.tau());
  Vector out = u;
  for (Index t = 0; t < chain.tau(); ++t) {
    auto b = chain.block(out, t);
    const double n = b.norm();
    const double R = dom.radii[size_t(t)];
    if (n > R) {
      b *= R / n;
      // rounding can leave the norm an ulp above R; shrink so a second projection is a no-op
      while (b.norm() > R) b *= 1.0 - 0x1p-52;
    }
  }
  return out;
}

double certified_gamma(const TrainConfig& cfg, bool stochastic) {
  if (cfg.policy == StepPolicy::User) {
    if (!(cfg.gamma > 0) || !std::isfinite(cfg.gamma)) throw std::invalid_argument("step size must be positive");
    return cfg.gamma;
  }
  if (cfg.certified_L.is_inf())
    throw NotSmooth(
        "certified step needs a finite smoothness constant; the chain has a non-smooth stage "
        "(use softplus/softplus0 for relu and avgpool for maxpool)");
  if (cfg.certified_L.is_zero()) throw NotSmooth("certified smoothness constant is 0; pass an explicit step");
  const LogReal den = stochastic ? LogReal::from(2.0) * cfg.certified_L : cfg.certified_L;
  return std::exp(-den.log());
}

namespace {

struct Eval {
  double value;
  Vector grad;
};

Eval evaluate(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u) {
  const ValueGrad vg = grad_objective(chain, x0, u, h);
  return {vg.value + r.value(u), vg.grad + r.gradient(u)};
}

TrainTrace run(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u0,
               const TrainConfig& cfg, bool stochastic) {
  if (cfg.steps < 1) throw std::invalid_argument("iteration budget must be >= 1");
  TrainTrace tr;
  tr.gamma = certified_gamma(cfg, stochastic);
  const Index n = h.samples();
  const bool sample = stochastic && cfg.batch > 0 && cfg.batch < n;
  if (stochastic && cfg.batch < 0) throw std::invalid_argument("batch size must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> idx(static_cast<size_t>(n));
  Vector u = project_domain(chain, u0, cfg.dom);
  for (int k = 0; k < cfg.steps; ++k) {
    const Eval full = evaluate(chain, h, r, x0, u);
    Vector g = full.grad;
    if (sample) {
      std::iota(idx.begin(), idx.end(), Index(0));
      std::shuffle(idx.begin(), idx.end(), rng);
      std::vector<Index> pick(idx.begin(), idx.begin() + cfg.batch);
      std::sort(pick.begin(), pick.end());
      const auto hb = h.subset(pick);
      g = evaluate(chain, *hb, r, x0, u).grad;
      tr.variance.push_back((g - full.grad).squaredNorm());
    } else if (stochastic) {
      tr.variance.push_back(0.0);
    }
    const Vector step = u - tr.gamma * full.grad;
    const Vector full_next = project_domain(chain, step, cfg.dom);
    const double gm = (u - full_next).norm() / tr.gamma;
    tr.value.push_back(full.value);
    tr.mapping_norm.push_back(gm);
    Vector next = sample ? project_domain(chain, u - tr.gamma * g, cfg.dom) : full_next;
    tr.projected.push_back(!sample ? (full_next - step).norm() > 0 : (next - (u - tr.gamma * g)).norm() > 0);
    if (gm <= cfg.eps) break;
    u = std::move(next);
  }
  tr.u = u;
  return tr;
}

}  // namespace

TrainTrace train_pgd(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u0,
                     const TrainConfig& cfg) {
  return run(chain, h, r, x0, u0, cfg, false);
}

TrainTrace train_sgd(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u0,
                     const TrainConfig& cfg) {
  return run(chain, h, r, x0, u0, cfg, true);
}

LogReal certify_objective(const ChainSpec& spec, const BoundedDomain& dom, const Chain& chain, const Objective& h,
                          const LossConstants& hc, double L_r, const Vector& x0) {
  BoundedDomain d = dom;
  d.x0_norm = std::max(d.x0_norm, x0.norm());
  const auto prop = propagate_chain(catalog_constants(spec), d);
  const Vector uref = Vector::Zero(chain.total_params());
  const Tape tape = forward(chain, x0, uref);
  const LogReal g0 = LogReal::from(h.gradient(tape.output()).norm());
  return objective_smoothness(prop.out, hc, g0, LogReal::from(L_r), d);
}

}  // namespace chainopt
