#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "chainopt/activations.hpp"
#include "chainopt/biaffine.hpp"

namespace chainopt {

struct SecondOrder {
  Matrix xx;  // d x d
  Matrix xu;  // d x p
  Matrix uu;  // p x p
};

struct LayerSparsity {
  std::uint64_t a = 0, beta = 0, beta_u = 0, beta_x = 0;
  std::uint64_t backward() const { return a + 2 * beta + beta_u + beta_x; }
};

// Stored derivative information of one layer at (x, u).
class Linearization {
 public:
  virtual ~Linearization() = default;
  virtual const Vector& output() const = 0;
  // (grad_x phi lam, grad_u phi lam); adds structural units to *units
  virtual std::pair<Vector, Vector> vjp(const Vector& lam, std::uint64_t* units) const = 0;
  // grad_x phi^T dx + grad_u phi^T du
  virtual Vector jvp(const Vector& dx, const Vector& du) const = 0;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string describe() const = 0;
  virtual Index in_dim() const = 0;
  virtual Index out_dim() const = 0;
  virtual Index param_dim() const = 0;

  virtual Vector value(const Vector& x, const Vector& u) const = 0;
  virtual std::unique_ptr<Linearization> linearize(const Vector& x, const Vector& u) const = 0;
  virtual bool twice_differentiable() const = 0;
  // adjoint-contracted Hessians; throws SecondOrderUnavailable naming the layer
  virtual SecondOrder second_contract(const Vector& x, const Vector& u, const Vector& lam) const = 0;
  virtual LayerSparsity sparsity() const = 0;

  // Both adjoint products without keeping a linearization around.
  std::pair<Vector, Vector> jvp_transposed(const Vector& x, const Vector& u, const Vector& lam) const {
    return linearize(x, u)->vjp(lam, nullptr);
  }
};

using LayerPtr = std::shared_ptr<const Layer>;

// phi = a_k o ... o a_1 o b
class BiAffineLayer : public Layer {
 public:
  BiAffineLayer(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label = "");
  std::string describe() const override;
  Index in_dim() const override { return b_->in_dim(); }
  Index out_dim() const override { return acts_.empty() ? b_->out_dim() : acts_.back()->out_dim(); }
  Index param_dim() const override { return b_->param_dim(); }

  Vector value(const Vector& x, const Vector& u) const override;
  std::unique_ptr<Linearization> linearize(const Vector& x, const Vector& u) const override;
  bool twice_differentiable() const override;
  SecondOrder second_contract(const Vector& x, const Vector& u, const Vector& lam) const override;
  LayerSparsity sparsity() const override;

  const BiAffine& biaffine() const { return *b_; }
  const std::vector<ActivationPtr>& activations() const { return acts_; }

 private:
  BiAffinePtr b_;
  std::vector<ActivationPtr> acts_;
  std::string label_;
};

LayerPtr make_layer(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label = "");

// Residual layer on the augmented state (x_{t-1}, x_{t-2}) -> (a(b(x_{t-1}, u) + x_{t-2}), x_{t-1}).
// `acts` must map the b output dimension back to itself.
LayerPtr residual_wrap(BiAffinePtr b, std::vector<ActivationPtr> acts, std::string label = "");

// Dense transposed Jacobians of a layer at (x, u): grad_x phi (d x out) and grad_u phi (p x out).
std::pair<Matrix, Matrix> layer_jacobians_t(const Layer& layer, const Vector& x, const Vector& u);

}  // namespace chainopt
