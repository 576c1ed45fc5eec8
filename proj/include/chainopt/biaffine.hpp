#pragma once

#include <cstdint>
#include <memory>

#include "chainopt/activations.hpp"
#include "chainopt/tensor.hpp"

namespace chainopt {

// Dense b(x, u) = beta[x, u, .] + Bu u + Bx x + b0 with beta of shape d x p x eta.
struct BiAffineForm {
  Tensor3 beta;
  Matrix Bu;  // eta x p
  Matrix Bx;  // eta x d
  Vector b0;  // eta

  Index in_dim() const { return Bx.cols(); }
  Index param_dim() const { return Bu.cols(); }
  Index out_dim() const { return b0.size(); }
  Vector eval(const Vector& x, const Vector& u) const;
};

struct BiAffineSparsity {
  std::uint64_t beta = 0, beta_u = 0, beta_x = 0;
};

class BiAffine {
 public:
  virtual ~BiAffine() = default;
  virtual std::string name() const = 0;
  virtual Index in_dim() const = 0;
  virtual Index out_dim() const = 0;
  virtual Index param_dim() const = 0;

  virtual Vector value(const Vector& x, const Vector& u) const = 0;
  // grad_x b(x,u) lam; counts s_beta + s_beta_x units
  virtual Vector vjp_x(const Vector& x, const Vector& u, const Vector& lam, std::uint64_t* units) const = 0;
  // grad_u b(x,u) lam; counts s_beta + s_beta_u units
  virtual Vector vjp_u(const Vector& x, const Vector& u, const Vector& lam, std::uint64_t* units) const = 0;
  // directional derivative along (dx, du)
  virtual Vector jvp(const Vector& x, const Vector& u, const Vector& dx, const Vector& du) const = 0;
  // beta[., ., lam] as a d x p matrix
  virtual Matrix bilinear_contract(const Vector& lam) const = 0;
  virtual BiAffineSparsity sparsity() const = 0;
  virtual BiAffineForm dense() const;
};

using BiAffinePtr = std::shared_ptr<const BiAffine>;

// Per sample z (delta) -> W^T z + w0 (delta_out); u = (Vec(W); w0), W column-major delta x delta_out.
BiAffinePtr make_fully_connected(Index delta, Index delta_out, Index batch);
// Per sample o[k + np*f] = <W[:, f], z[patch k]> + w0[f]; u = (Vec(W) s x nf; w0).
BiAffinePtr make_conv(PatchSet patches, Index filters, Index batch);
// b(x, u) = x with no parameters.
BiAffinePtr make_pass_through(Index dim);
BiAffinePtr make_dense(BiAffineForm form);
// (x, xp) -> (b(x, u) + xp, x)
BiAffinePtr make_residual_biaffine(BiAffinePtr inner);

}  // namespace chainopt
