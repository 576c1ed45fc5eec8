#pragma once

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "chainopt/autodiff.hpp"
#include "chainopt/objectives.hpp"

namespace chainopt {

// |a - b| / max(|a|, |b|), 0 when both vanish
double rel_error(const Vector& a, const Vector& b);

// Central differences of a scalar function along every coordinate.
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5);

struct GradCheckRow {
  std::string what;
  double rel_err = 0.0;
  bool pass = false;
};

// Per-layer adjoint products and the end-to-end gradient of h o f against central differences.
std::vector<GradCheckRow> gradcheck(const Chain& chain, const Objective& h, const Vector& x0, const Vector& u,
                                    std::mt19937_64& rng, double tol = 1e-5);

// Random labels for an objective kind over the chain output (n samples of dimension q).
std::unique_ptr<Objective> synthetic_objective(const std::string& kind, Index q, Index n, std::mt19937_64& rng);
// Random input with the given norm; residual chains get a zero tail.
Vector synthetic_input(const Chain& chain, Index d0, double norm, std::mt19937_64& rng);

}  // namespace chainopt
