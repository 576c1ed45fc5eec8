#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "chainopt/chain.hpp"

namespace chainopt {

class Objective;

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Forward record: states x_0..x_tau and one linearization per layer.
class Tape {
 public:
  const Chain& chain() const { return *chain_; }
  const std::vector<Vector>& states() const { return states_; }
  const Vector& output() const { return states_.back(); }
  const Vector& params() const { return u_; }
  const Linearization& linearization(Index t) const { return *lins_[t]; }

  // Number of reverse sweeps and forward-tangent sweeps run on this tape.
  std::uint64_t calls() const { return calls_.load(); }
  void reset_calls() const { calls_ = 0; }
  void count_call() const { calls_.fetch_add(1); }

 private:
  friend Tape forward(const Chain&, const Vector&, const Vector&);
  const Chain* chain_ = nullptr;
  Vector u_;
  std::vector<Vector> states_;
  std::vector<std::unique_ptr<Linearization>> lins_;
  mutable std::atomic<std::uint64_t> calls_{0};
  std::uint64_t forward_units_ = 0;

 public:
  Tape() = default;
  Tape(Tape&& o) noexcept
      : chain_(o.chain_), u_(std::move(o.u_)), states_(std::move(o.states_)), lins_(std::move(o.lins_)),
        calls_(o.calls_.load()), forward_units_(o.forward_units_) {}
  std::uint64_t forward_units() const { return forward_units_; }
};

// Runs the chain, keeping stored derivative operators. The chain must outlive the tape.
Tape forward(const Chain& chain, const Vector& x0, const Vector& u);

struct Gradient {
  Vector g;  // concatenated blocks g_1..g_tau
  Vector lambda0;  // adjoint reaching x_0
  std::uint64_t units = 0;
};

// (g_1..g_tau) = grad f_{x0,tau}(u) mu by the reverse sweep.
Gradient backward(const Tape& tape, const Vector& mu);

// grad f_{x0,tau}(u)^T v: the tangent of the output along a parameter direction.
Vector forward_tangent(const Tape& tape, const Vector& v);

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

ValueGrad grad_objective(const Chain& chain, const Vector& x0, const Vector& u, const Objective& h);

struct OpCount {
  std::uint64_t formula = 0;   // sum_t s_a + 2 s_beta + s_beta_u + s_beta_x
  std::uint64_t measured = 0;  // counter from one instrumented reverse sweep
  std::uint64_t forward_measured = 0;
  std::vector<LayerSparsity> per_layer;
};

// Structural formula plus the measured count of one backward sweep at (x0, u).
OpCount count_backward_cost(const Chain& chain, const Vector& x0, const Vector& u);
// Formula only (no evaluation).
OpCount count_backward_formula(const Chain& chain);
// sum_t 2 m delta_t (delta_{t-1} + 1) over fully-connected layers of a spec.
std::uint64_t fc_backward_figure(const ChainSpec& spec);

}  // namespace chainopt
