#include "chainopt/smoothness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chainopt {

namespace {

LogReal lr(double x) { return LogReal::from(x); }

// Largest number of windows covering one input position along an axis.
Index axis_multiplicity(Index n, Index k, Index s, Index pad) {
  const Index out = (n + 2 * pad - k) / s + 1;
  Index best = 0;
  for (Index i = 0; i < n; ++i) {
    Index c = 0;
    for (Index o = 0; o < out; ++o)
      if (o * s - pad <= i && i <= o * s - pad + k - 1) ++c;
    best = std::max(best, c);
  }
  return best;
}

Index grid_multiplicity(const Shape& in, Index kh, Index kw, Index sh, Index sw, Index ph, Index pw) {
  return axis_multiplicity(in.height, kh, sh, ph) * axis_multiplicity(in.width, kw, sw, pw);
}

ActConstants wrap_tail(ActConstants a) {
  a.name = "residual(" + a.name + ")";
  a.m = LogReal::inf();
  a.ell = max(a.ell, LogReal::one());
  a.grad0 = max(a.grad0, LogReal::one());
  return a;
}

}  // namespace

void BoundedDomain::validate(Index tau) const {
  if (Index(radii.size()) != tau)
    throw DimensionError("domain: " + std::to_string(radii.size()) + " radii for " + std::to_string(tau) + " layers");
  for (double r : radii)
    if (!(r > 0)) throw std::invalid_argument("domain: radii must be positive");
  if (!(x0_norm >= 0)) throw std::invalid_argument("domain: input norm must be nonnegative");
}

double BoundedDomain::diameter() const {
  double s = 0.0;
  for (double r : radii) s += r * r;
  return 2.0 * std::sqrt(s);
}

ActConstants activation_constants(const ActSpec& a, const Shape& in, Index batch) {
  const double eta = double(in.size() * batch);
  const double m = double(batch);
  ActConstants c;
  c.name = act_kind_name(a.kind);
  switch (a.kind) {
    case ActKind::Identity: break;
    case ActKind::ReLU: c.L = LogReal::inf(); break;
    case ActKind::Softplus:
      c.L = lr(0.25);
      c.grad0 = lr(0.5);
      c.val0 = lr(std::log(2.0) * std::sqrt(eta));
      break;
    case ActKind::ShiftedSoftplus:
      c.L = lr(0.25);
      c.grad0 = lr(0.5);
      break;
    case ActKind::Sigmoid:
      c.m = lr(std::sqrt(eta));
      c.ell = lr(0.25);
      c.L = lr(0.1);
      c.grad0 = lr(0.25);
      c.val0 = lr(std::sqrt(eta) / 2.0);
      break;
    case ActKind::Softmax: {
      const double q = double(in.size());
      c.m = lr(std::sqrt(m));
      c.ell = lr(2.0);
      c.L = lr(4.0);
      c.grad0 = lr(1.0 / q);
      c.val0 = lr(std::sqrt(m / q));
      break;
    }
    case ActKind::AvgPool: {
      // max_i sum_{k : i in patch k} 1/|patch k|, windows are never padded
      const double w = double(grid_multiplicity(in, a.kh, a.kw, a.sh, a.sw, 0, 0)) / double(a.kh * a.kw);
      c.ell = lr(std::max(1.0, std::sqrt(w)));
      c.grad0 = c.ell;
      break;
    }
    case ActKind::MaxPool: {
      const Index mult = grid_multiplicity(in, a.kh, a.kw, a.sh, a.sw, 0, 0);
      c.ell = lr(std::max(1.0, std::sqrt(double(mult))));
      c.L = LogReal::inf();
      c.grad0 = c.ell;
      break;
    }
    case ActKind::BatchNorm:
      if (!(a.eps > 0)) throw std::invalid_argument("batchnorm constants need eps > 0");
      c.m = lr(double(in.size()) * m);
      c.ell = lr(2.0 / std::sqrt(a.eps));
      c.L = lr(2.0 / (std::sqrt(m) * a.eps));
      c.grad0 = lr(1.0 / std::sqrt(a.eps));
      break;
    case ActKind::TailPass: throw std::invalid_argument("catalog: tail-pass stages are built from residual layers");
  }
  return c;
}

BiAffineConstants biaffine_constants(const LayerSpec& L, const LayerShapes& sh, Index batch) {
  const double m = double(batch);
  BiAffineConstants c;
  switch (L.kind) {
    case BiKind::FullyConnected:
      c.Lb = LogReal::one();
      c.lu = lr(std::sqrt(m));
      break;
    case BiKind::Conv: {
      const Index mult = grid_multiplicity(sh.in, L.kh, L.kw, L.sh, L.sw, L.ph, L.pw);
      c.Lb = lr(std::sqrt(double(mult)));
      c.lu = lr(std::sqrt(m * double(sh.b_out.height * sh.b_out.width)));
      break;
    }
    case BiKind::PassThrough: c.lx = LogReal::one(); break;
  }
  if (L.residual) c.lx = c.lx + LogReal::one();
  return c;
}

std::vector<StageConstants> catalog_constants(const ChainSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<StageConstants> out;
  for (size_t t = 0; t < spec.layers.size(); ++t) {
    const auto& L = spec.layers[t];
    StageConstants s;
    s.label = std::to_string(t + 1);
    s.b = biaffine_constants(L, shapes[t], spec.batch);
    Shape cur = shapes[t].b_out;
    for (size_t j = 0; j < L.acts.size(); ++j) {
      ActConstants a = activation_constants(L.acts[j], cur, spec.batch);
      s.acts.push_back(L.residual ? wrap_tail(a) : a);
      cur = shapes[t].act_out[j];
    }
    if (L.residual && L.acts.empty()) {
      ActConstants id;
      id.name = "residual(identity)";
      s.acts.push_back(id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Refined refine_on_ball(const SmoothTriple& t, LogReal grad0, LogReal f0, LogReal R) {
  Refined r;
  r.ell = min(t.ell, grad0 + R * t.L);
  r.m = min(t.m, f0 + R * r.ell);
  return r;
}

Propagation propagate_chain(const std::vector<StageConstants>& stages, const BoundedDomain& dom) {
  dom.validate(Index(stages.size()));
  Propagation p;
  LogReal m = LogReal::from(dom.x0_norm), ell = LogReal::zero(), L = LogReal::zero();
  const LogReal two = LogReal::from(2.0);
  for (size_t t = 0; t < stages.size(); ++t) {
    const auto& s = stages[t];
    const LogReal R = LogReal::from(dom.radii[t]);
    const LogReal lx = s.b.Lb * R + s.b.lx;
    const LogReal lu = s.b.Lb * m + s.b.lu;
    LogReal mt = lx * m + lu * R + s.b.b0;
    LogReal l0 = LogReal::one(), Lt = LogReal::zero();
    for (const auto& a : s.acts) {
      const LogReal lt = min(a.ell, a.grad0 + a.L * mt);
      mt = min(a.m, a.val0 + lt * mt);
      Lt = Lt * a.ell + a.L * l0 * l0;
      l0 = lt * l0;
    }
    const LogReal ell_new = lx * l0 * ell + lu * l0;
    const LogReal L_new =
        L * lx * l0 + lx * lx * Lt * ell * ell + two * (lu * lx * Lt + s.b.Lb * l0) * ell + lu * lu * Lt;
    m = mt;
    ell = ell_new;
    L = L_new;
    p.stages.push_back({m, ell, L});
  }
  p.out = p.stages.empty() ? SmoothTriple{m, ell, L} : p.stages.back();
  return p;
}

LipSmooth generic_recursion(const std::vector<LogReal>& ell_phi, const std::vector<LogReal>& L_phi) {
  if (ell_phi.size() != L_phi.size()) throw DimensionError("generic recursion: constant lists differ in length");
  LogReal ell = LogReal::zero(), L = LogReal::zero();
  for (size_t t = 0; t < ell_phi.size(); ++t) {
    const LogReal one_plus = LogReal::one() + ell;
    L = L * ell_phi[t] + L_phi[t] * one_plus * one_plus;
    ell = ell_phi[t] + ell * ell_phi[t];
  }
  return {ell, L};
}

std::vector<InputStage> input_stages(const std::vector<StageConstants>& stages, const Chain& chain, const Vector& u) {
  if (Index(stages.size()) != chain.tau()) throw DimensionError("input stages: constants do not match the chain");
  std::vector<InputStage> out;
  for (Index t = 0; t < chain.tau(); ++t) {
    const auto& s = stages[size_t(t)];
    const LogReal un = LogReal::from(chain.block(u, t).norm());
    out.push_back({s.b.Lb * un + s.b.lx, s.b.lu * un + s.b.b0, s.acts});
  }
  return out;
}

SmoothTriple input_smoothness(const std::vector<InputStage>& stages, LogReal R) {
  LogReal m = R, ell = LogReal::one(), L = LogReal::zero();
  // one step of the composition recursion for a map with refined constants at input bound m
  auto step = [&](LogReal mphi, LogReal lphi, LogReal Lphi) {
    L = Lphi * ell * ell + L * lphi;
    ell = ell * lphi;
    m = mphi;
  };
  for (const auto& s : stages) {
    step(s.lip * m + s.b0, s.lip, LogReal::zero());
    for (const auto& a : s.acts) {
      const Refined r = refine_on_ball({a.m, a.ell, a.L}, a.grad0, a.val0, m);
      step(r.m, r.ell, a.L);
    }
  }
  return {m, ell, L};
}

std::pair<std::vector<StageConstants>, BoundedDomain> recenter_domain(const std::vector<StageConstants>& stages,
                                                                      const BoundedDomain& dom,
                                                                      const std::vector<double>& ustar_norms,
                                                                      const std::vector<double>& new_radii) {
  if (ustar_norms.size() != stages.size()) throw DimensionError("recenter: one centre norm per layer is needed");
  std::vector<StageConstants> out = stages;
  for (size_t t = 0; t < out.size(); ++t) {
    const LogReal c = LogReal::from(ustar_norms[t]);
    out[t].b.lx = stages[t].b.lx + stages[t].b.Lb * c;
    out[t].b.b0 = stages[t].b.b0 + stages[t].b.lu * c;
  }
  BoundedDomain d{new_radii, dom.x0_norm};
  d.validate(Index(stages.size()));
  return {out, d};
}

LossConstants loss_constants(const std::string& name, const LossContext& ctx) {
  if (name == "squared") return {LogReal::from(ctx.rho_c + ctx.rho_y), LogReal::one()};
  if (name == "logistic") return {LogReal::from(2.0), LogReal::from(2.0)};
  if (name == "convex-cluster") {
    // grad = D^T lambda with one unit-ball block per pair and |D| = sqrt(n), so
    // |grad| <= sqrt(n * n(n-1)/2); that only exceeds n(n-1)/2 at n = 2
    const double n = double(ctx.n), pairs = n * (n - 1) / 2;
    return {LogReal::from(std::max(pairs, std::sqrt(n * pairs))), LogReal::one()};
  }
  throw std::invalid_argument("unknown loss '" + name + "'");
}

LogReal objective_smoothness(const SmoothTriple& psi, const LossConstants& h, LogReal grad_at_ref, LogReal L_r,
                             const BoundedDomain& dom) {
  const LogReal D = LogReal::from(dom.diameter());
  const LogReal lh = min(h.ell, grad_at_ref + h.L * psi.ell * D);
  return psi.L * lh + psi.ell * psi.ell * h.L + L_r;
}

}  // namespace chainopt
