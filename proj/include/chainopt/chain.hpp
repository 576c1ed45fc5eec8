#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chainopt/layers.hpp"

namespace chainopt {

// Per-sample feature shape; index = c*H*W + h*W + w.
struct Shape {
  Index channels = 1, height = 1, width = 1;
  Index size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

enum class BiKind { FullyConnected, Conv, PassThrough };

struct ActSpec {
  ActKind kind = ActKind::Identity;
  Index kh = 2, kw = 2, sh = 2, sw = 2;  // pooling window and stride
  double eps = 0.0;                      // batch-norm
  bool operator==(const ActSpec&) const = default;
};

struct LayerSpec {
  BiKind kind = BiKind::FullyConnected;
  Index out = 0;  // fully-connected output features / conv filter count
  Index kh = 1, kw = 1, sh = 1, sw = 1, ph = 0, pw = 0;  // conv geometry
  std::vector<ActSpec> acts;
  bool residual = false;
  bool operator==(const LayerSpec&) const = default;
};

struct ChainSpec {
  Shape input;
  Index batch = 1;
  std::vector<LayerSpec> layers;
  bool operator==(const ChainSpec&) const = default;
};

// Shapes after the bi-affine part and after each activation of one layer.
struct LayerShapes {
  Shape in;
  Shape b_out;
  std::vector<Shape> act_out;
  Shape out() const { return act_out.empty() ? b_out : act_out.back(); }
};

// Infers per-sample shapes through the chain; throws DimensionError naming the layer index.
std::vector<LayerShapes> infer_shapes(const ChainSpec& spec);

class Chain {
 public:
  Chain() = default;
  Chain(Index input_dim, std::vector<LayerPtr> layers);

  Index tau() const { return Index(layers_.size()); }
  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return layers_.empty() ? input_dim_ : layers_.back()->out_dim(); }
  const Layer& layer(Index t) const { return *layers_[t]; }  // t = 0 .. tau-1
  const std::vector<LayerPtr>& layers() const { return layers_; }

  Index param_dim(Index t) const { return layers_[t]->param_dim(); }
  Index param_offset(Index t) const { return offsets_[t]; }
  Index total_params() const { return offsets_.back(); }
  auto block(const Vector& u, Index t) const { return u.segment(offsets_[t], param_dim(t)); }
  auto block(Vector& u, Index t) const { return u.segment(offsets_[t], param_dim(t)); }

 private:
  Index input_dim_ = 0;
  std::vector<LayerPtr> layers_;
  std::vector<Index> offsets_{0};
};

// Materialises patch lists and layer objects. Residual layers keep the augmented state
// (x_t, x_{t-1}); the chain input then has dimension 2 * d0 with x_{-1} = 0 in the tail.
Chain build_chain(const ChainSpec& spec);

// Gaussian parameters scaled by 1/sqrt(fan-in), seeded.
Vector random_params(const Chain& chain, std::mt19937_64& rng, double scale = 1.0);
Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0);

}  // namespace chainopt
