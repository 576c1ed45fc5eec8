#include "chainopt/autodiff.hpp"

#include "chainopt/objectives.hpp"

namespace chainopt {

Tape forward(const Chain& chain, const Vector& x0, const Vector& u) {
  if (x0.size() != chain.input_dim()) throw DimensionError("forward: x0 has the wrong dimension");
  if (u.size() != chain.total_params()) throw DimensionError("forward: parameter vector has the wrong dimension");
  Tape tape;
  tape.chain_ = &chain;
  tape.u_ = u;
  tape.states_.reserve(chain.tau() + 1);
  tape.states_.push_back(x0);
  for (Index t = 0; t < chain.tau(); ++t) {
    const Vector ut = chain.block(u, t);
    auto lin = chain.layer(t).linearize(tape.states_.back(), ut);
    const Vector& xt = lin->output();
    if (!xt.allFinite())
      throw NumericError("forward: non-finite state after layer " + std::to_string(t + 1) + " (" +
                         chain.layer(t).describe() + ")");
    tape.states_.push_back(xt);
    tape.lins_.push_back(std::move(lin));
    const auto s = chain.layer(t).sparsity();
    tape.forward_units_ += s.beta + s.beta_u + s.beta_x;
  }
  return tape;
}

Gradient backward(const Tape& tape, const Vector& mu) {
  const Chain& chain = tape.chain();
  if (mu.size() != chain.output_dim()) throw DimensionError("backward: slope dimension mismatch");
  tape.count_call();
  Gradient out;
  out.g.resize(chain.total_params());
  Vector lam = mu;
  for (Index t = chain.tau(); t-- > 0;) {
    auto [gx, gu] = tape.linearization(t).vjp(lam, &out.units);
    chain.block(out.g, t) = gu;
    lam = std::move(gx);
  }
  out.lambda0 = std::move(lam);
  return out;
}

Vector forward_tangent(const Tape& tape, const Vector& v) {
  const Chain& chain = tape.chain();
  if (v.size() != chain.total_params()) throw DimensionError("forward_tangent: direction dimension mismatch");
  tape.count_call();
  Vector y = Vector::Zero(chain.input_dim());
  for (Index t = 0; t < chain.tau(); ++t) y = tape.linearization(t).jvp(y, chain.block(v, t));
  return y;
}

ValueGrad grad_objective(const Chain& chain, const Vector& x0, const Vector& u, const Objective& h) {
  Tape tape = forward(chain, x0, u);
  ValueGrad out;
  out.value = h.value(tape.output());
  out.grad = backward(tape, h.gradient(tape.output())).g;
  return out;
}

OpCount count_backward_formula(const Chain& chain) {
  OpCount c;
  for (Index t = 0; t < chain.tau(); ++t) {
    const auto s = chain.layer(t).sparsity();
    c.per_layer.push_back(s);
    c.formula += s.backward();
  }
  return c;
}

OpCount count_backward_cost(const Chain& chain, const Vector& x0, const Vector& u) {
  OpCount c = count_backward_formula(chain);
  Tape tape = forward(chain, x0, u);
  c.forward_measured = tape.forward_units();
  Vector mu = Vector::Ones(chain.output_dim());
  c.measured = backward(tape, mu).units;
  return c;
}

std::uint64_t fc_backward_figure(const ChainSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::uint64_t total = 0;
  for (size_t t = 0; t < spec.layers.size(); ++t)
    if (spec.layers[t].kind == BiKind::FullyConnected)
      total += 2ull * spec.batch * spec.layers[t].out * (shapes[t].in.size() + 1);
  return total;
}

}  // namespace chainopt
