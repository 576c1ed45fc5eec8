#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "chainopt/tensor.hpp"

namespace chainopt {

struct SecondOrderUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ActKind { Identity, ReLU, Softplus, ShiftedSoftplus, Sigmoid, Softmax, AvgPool, MaxPool, BatchNorm, TailPass };

const char* act_kind_name(ActKind k);

// Patch index lists for one sample. Entry -1 is a padding tap that reads 0.
struct PatchSet {
  Index in_dim = 0;
  Index patch_size = 0;
  std::vector<std::int64_t> idx;  // count() * patch_size entries, patch-major

  Index count() const { return patch_size == 0 ? 0 : Index(idx.size()) / patch_size; }
  const std::int64_t* patch(Index k) const { return idx.data() + k * patch_size; }
  // largest number of patches sharing one input coordinate
  Index max_multiplicity() const;

  // Patches over all channels of a C x H x W image (layout c*H*W + h*W + w), one patch per output pixel.
  static PatchSet conv2d(Index channels, Index height, Index width, Index kh, Index kw, Index sh, Index sw,
                         Index ph = 0, Index pw = 0);
  // Per-channel pooling windows; patch index = c*Ho*Wo + pixel.
  static PatchSet pool2d(Index channels, Index height, Index width, Index kh, Index kw, Index sh, Index sw);
  static PatchSet conv1d(Index length, Index k, Index stride) { return conv2d(1, 1, length, 1, k, 1, stride); }
};

// One nonlinear stage a_{t,j} acting on the whole batch vector.
class Activation {
 public:
  virtual ~Activation() = default;
  virtual ActKind kind() const = 0;
  virtual std::string name() const { return act_kind_name(kind()); }
  virtual Index in_dim() const = 0;
  virtual Index out_dim() const = 0;

  virtual Vector value(const Vector& z) const = 0;
  // grad a(z) lam (Jacobian transpose times lam); adds the structural nonzeros touched to *units.
  virtual Vector vjp(const Vector& z, const Vector& out, const Vector& lam, std::uint64_t* units) const = 0;
  // Jacobian times a tangent.
  virtual Vector jvp(const Vector& z, const Vector& out, const Vector& dz) const = 0;
  virtual bool twice_differentiable() const { return true; }
  // sum_k lam_k hess a_k(z), an in_dim x in_dim matrix.
  virtual Matrix hess_contract(const Vector& z, const Vector& lam) const = 0;
  // Gradient sparsity s_a.
  virtual std::uint64_t sparsity() const = 0;
};

using ActivationPtr = std::shared_ptr<const Activation>;

ActivationPtr make_elementwise(ActKind kind, Index dim);
ActivationPtr make_softmax(Index q, Index batch);
ActivationPtr make_pool(ActKind kind, PatchSet patches, Index batch);
ActivationPtr make_batchnorm(Index delta, Index batch, double eps);
// Applies `inner` to the leading inner->in_dim() coordinates and passes `tail` trailing coordinates through.
ActivationPtr make_tail_pass(ActivationPtr inner, Index tail);

// Dense Jacobian transpose (in_dim x out_dim) assembled from vjp on unit vectors.
Matrix activation_jacobian_t(const Activation& a, const Vector& z);

namespace scalar_fn {
double softplus(double z);
double sigmoid(double z);
}  // namespace scalar_fn

}  // namespace chainopt
