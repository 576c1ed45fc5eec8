#include "chainopt/chain.hpp"

#include <cmath>

namespace chainopt {

Chain::Chain(Index input_dim, std::vector<LayerPtr> layers) : input_dim_(input_dim), layers_(std::move(layers)) {
  Index d = input_dim_;
  for (size_t t = 0; t < layers_.size(); ++t) {
    if (layers_[t]->in_dim() != d)
      throw DimensionError("chain: layer " + std::to_string(t + 1) + " expects input " +
                           std::to_string(layers_[t]->in_dim()) + ", got " + std::to_string(d));
    d = layers_[t]->out_dim();
    offsets_.push_back(offsets_.back() + layers_[t]->param_dim());
  }
}

std::vector<LayerShapes> infer_shapes(const ChainSpec& spec) {
  if (spec.layers.empty()) throw DimensionError("chain needs at least one layer");
  if (spec.batch < 1) throw DimensionError("batch size must be positive");
  std::vector<LayerShapes> out;
  Shape cur = spec.input;
  for (size_t t = 0; t < spec.layers.size(); ++t) {
    const auto& L = spec.layers[t];
    const std::string where = "layer " + std::to_string(t + 1);
    LayerShapes ls;
    ls.in = cur;
    switch (L.kind) {
      case BiKind::FullyConnected:
        if (L.out < 1) throw DimensionError(where + ": fully-connected needs out >= 1");
        ls.b_out = {L.out, 1, 1};
        break;
      case BiKind::Conv: {
        if (L.out < 1) throw DimensionError(where + ": conv needs filters >= 1");
        const Index hp = cur.height + 2 * L.ph, wp = cur.width + 2 * L.pw;
        if (hp < L.kh || wp < L.kw || L.sh < 1 || L.sw < 1)
          throw DimensionError(where + ": conv kernel does not fit the input");
        ls.b_out = {L.out, (hp - L.kh) / L.sh + 1, (wp - L.kw) / L.sw + 1};
        break;
      }
      case BiKind::PassThrough: ls.b_out = cur; break;
    }
    Shape s = ls.b_out;
    for (const auto& a : L.acts) {
      if (a.kind == ActKind::AvgPool || a.kind == ActKind::MaxPool) {
        if (s.height < a.kh || s.width < a.kw || a.sh < 1 || a.sw < 1)
          throw DimensionError(where + ": pooling window does not fit");
        s = {s.channels, (s.height - a.kh) / a.sh + 1, (s.width - a.kw) / a.sw + 1};
      } else if (a.kind == ActKind::BatchNorm && !(a.eps > 0)) {
        throw DimensionError(where + ": batchnorm needs eps > 0");
      }
      ls.act_out.push_back(s);
    }
    if (L.residual && ls.out().size() != cur.size())
      throw DimensionError(where + ": residual layer must preserve the feature dimension");
    cur = ls.out();
    out.push_back(ls);
  }
  return out;
}

namespace {

ActivationPtr build_act(const ActSpec& a, const Shape& in, Index m) {
  switch (a.kind) {
    case ActKind::Softmax: return make_softmax(in.size(), m);
    case ActKind::AvgPool:
    case ActKind::MaxPool:
      return make_pool(a.kind, PatchSet::pool2d(in.channels, in.height, in.width, a.kh, a.kw, a.sh, a.sw), m);
    case ActKind::BatchNorm: return make_batchnorm(in.size(), m, a.eps);
    default: return make_elementwise(a.kind, in.size() * m);
  }
}

}  // namespace

Chain build_chain(const ChainSpec& spec) {
  const auto shapes = infer_shapes(spec);
  const Index m = spec.batch;
  std::vector<LayerPtr> layers;
  bool any_res = false, all_res = true;
  for (const auto& L : spec.layers) {
    any_res = any_res || L.residual;
    all_res = all_res && L.residual;
  }
  if (any_res && !all_res) throw DimensionError("residual chains must mark every layer residual");
  for (size_t t = 0; t < spec.layers.size(); ++t) {
    const auto& L = spec.layers[t];
    const auto& sh = shapes[t];
    BiAffinePtr b;
    switch (L.kind) {
      case BiKind::FullyConnected: b = make_fully_connected(sh.in.size(), L.out, m); break;
      case BiKind::Conv:
        b = make_conv(PatchSet::conv2d(sh.in.channels, sh.in.height, sh.in.width, L.kh, L.kw, L.sh, L.sw, L.ph, L.pw),
                      L.out, m);
        break;
      case BiKind::PassThrough: b = make_pass_through(sh.in.size() * m); break;
    }
    std::vector<ActivationPtr> acts;
    Shape s = sh.b_out;
    for (size_t j = 0; j < L.acts.size(); ++j) {
      acts.push_back(build_act(L.acts[j], s, m));
      s = sh.act_out[j];
    }
    if (any_res)
      layers.push_back(residual_wrap(b, acts));
    else
      layers.push_back(make_layer(b, std::move(acts)));
  }
  const Index d0 = spec.input.size() * m;
  return Chain(any_res ? 2 * d0 : d0, std::move(layers));
}

Vector random_vector(Index n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

Vector random_params(const Chain& chain, std::mt19937_64& rng, double scale) {
  Vector u(chain.total_params());
  for (Index t = 0; t < chain.tau(); ++t) {
    const Index p = chain.param_dim(t);
    if (p > 0) chain.block(u, t) = random_vector(p, rng, 2.0 * scale / std::sqrt(double(p)));
  }
  return u;
}

}  // namespace chainopt
