#include "chainopt/layers.hpp"

#include <sstream>

namespace chainopt {

namespace {

class BiAffineLinearization final : public Linearization {
 public:
  BiAffineLinearization(const BiAffineLayer& layer, Vector x, Vector u) : l_(layer), x_(std::move(x)), u_(std::move(u)) {
    z_.reserve(l_.activations().size() + 1);
    z_.push_back(l_.biaffine().value(x_, u_));
    for (const auto& a : l_.activations()) z_.push_back(a->value(z_.back()));
  }
  const Vector& output() const override { return z_.back(); }

  Vector adjoint_at_b(const Vector& lam, std::uint64_t* units) const {
    Vector g = lam;
    const auto& acts = l_.activations();
    for (size_t j = acts.size(); j-- > 0;) g = acts[j]->vjp(z_[j], z_[j + 1], g, units);
    return g;
  }
  std::pair<Vector, Vector> vjp(const Vector& lam, std::uint64_t* units) const override {
    if (lam.size() != output().size()) throw DimensionError("vjp: slope dimension mismatch");
    const Vector la = adjoint_at_b(lam, units);
    return {l_.biaffine().vjp_x(x_, u_, la, units), l_.biaffine().vjp_u(x_, u_, la, units)};
  }
  Vector jvp(const Vector& dx, const Vector& du) const override {
    Vector g = l_.biaffine().jvp(x_, u_, dx, du);
    const auto& acts = l_.activations();
    for (size_t j = 0; j < acts.size(); ++j) g = acts[j]->jvp(z_[j], z_[j + 1], g);
    return g;
  }

 private:
  const BiAffineLayer& l_;
  Vector x_, u_;
  std::vector<Vector> z_;
};

}  // namespace

BiAffineLayer::BiAffineLayer(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label)
    : b_(std::move(b)), acts_(std::move(acts)), label_(std::move(label)) {
  Index d = b_->out_dim();
  for (const auto& a : acts_) {
    if (a->in_dim() != d) throw DimensionError("layer: activation " + a->name() + " input dim mismatch");
    d = a->out_dim();
  }
}

std::string BiAffineLayer::describe() const {
  if (!label_.empty()) return label_;
  std::ostringstream os;
  os << b_->name();
  for (const auto& a : acts_) os << ">" << a->name();
  return os.str();
}

Vector BiAffineLayer::value(const Vector& x, const Vector& u) const {
  if (x.size() != in_dim() || u.size() != param_dim())
    throw DimensionError("layer " + describe() + ": input or parameter dimension mismatch");
  Vector z = b_->value(x, u);
  for (const auto& a : acts_) z = a->value(z);
  return z;
}

std::unique_ptr<Linearization> BiAffineLayer::linearize(const Vector& x, const Vector& u) const {
  if (x.size() != in_dim() || u.size() != param_dim())
    throw DimensionError("layer " + describe() + ": input or parameter dimension mismatch");
  return std::make_unique<BiAffineLinearization>(*this, x, u);
}

bool BiAffineLayer::twice_differentiable() const {
  for (const auto& a : acts_)
    if (!a->twice_differentiable()) return false;
  return true;
}

SecondOrder BiAffineLayer::second_contract(const Vector& x, const Vector& u, const Vector& lam) const {
  for (const auto& a : acts_)
    if (!a->twice_differentiable())
      throw SecondOrderUnavailable("layer " + describe() + ": " + a->name() + " is not twice differentiable");
  const Index e = b_->out_dim();
  std::vector<Vector> z{b_->value(x, u)};
  for (const auto& a : acts_) z.push_back(a->value(z.back()));

  // adjoints at every stage output, last first
  std::vector<Vector> adj(acts_.size() + 1);
  adj[acts_.size()] = lam;
  for (size_t j = acts_.size(); j-- > 0;) adj[j] = acts_[j]->vjp(z[j], z[j + 1], adj[j + 1], nullptr);

  // H = sum_j Jpre_j H_j Jpre_j^T with Jpre_j the transposed Jacobian of a_{j-1} o ... o a_1
  Matrix H = Matrix::Zero(e, e);
  Matrix Jpre = Matrix::Identity(e, e);
  for (size_t j = 0; j < acts_.size(); ++j) {
    const Matrix Hj = acts_[j]->hess_contract(z[j], adj[j + 1]);
    H += Jpre * Hj * Jpre.transpose();
    Jpre = Jpre * activation_jacobian_t(*acts_[j], z[j]);
  }

  const Index d = in_dim(), p = param_dim();
  Matrix Jx(d, e), Ju(p, e);
  Vector ek = Vector::Zero(e);
  for (Index k = 0; k < e; ++k) {
    ek(k) = 1;
    Jx.col(k) = b_->vjp_x(x, u, ek, nullptr);
    Ju.col(k) = b_->vjp_u(x, u, ek, nullptr);
    ek(k) = 0;
  }
  SecondOrder s;
  s.xx = Jx * H * Jx.transpose();
  s.xu = b_->bilinear_contract(adj[0]) + Jx * H * Ju.transpose();
  s.uu = Ju * H * Ju.transpose();
  return s;
}

LayerSparsity BiAffineLayer::sparsity() const {
  LayerSparsity s;
  const auto b = b_->sparsity();
  s.beta = b.beta;
  s.beta_u = b.beta_u;
  s.beta_x = b.beta_x;
  for (const auto& a : acts_) s.a += a->sparsity();
  return s;
}

LayerPtr make_layer(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label) {
  return std::make_shared<BiAffineLayer>(std::move(b), std::move(acts), std::move(label));
}

LayerPtr residual_wrap(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label) {
  const Index d = b->in_dim(), e = b->out_dim();
  Index out = e;
  for (const auto& a : acts) out = a->out_dim();
  if (out != e) throw DimensionError("residual_wrap: activations must preserve the bi-affine output dimension");
  std::vector<ActivationPtr> wrapped;
  for (auto& a : acts) wrapped.push_back(make_tail_pass(a, d));
  if (label.empty()) label = b->name() + "+res";
  return make_layer(make_residual_biaffine(std::move(b)), std::move(wrapped), std::move(label));
}

std::pair<Matrix, Matrix> layer_jacobians_t(const Layer& layer, const Vector& x, const Vector& u) {
  auto lin = layer.linearize(x, u);
  const Index o = layer.out_dim();
  Matrix Jx(layer.in_dim(), o), Ju(layer.param_dim(), o);
  Vector e = Vector::Zero(o);
  for (Index k = 0; k < o; ++k) {
    e(k) = 1;
    auto [gx, gu] = lin->vjp(e, nullptr);
    Jx.col(k) = gx;
    Ju.col(k) = gu;
    e(k) = 0;
  }
  return {Jx, Ju};
}

}  // namespace chainopt
