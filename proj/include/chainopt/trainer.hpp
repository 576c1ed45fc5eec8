#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "chainopt/autodiff.hpp"
#include "chainopt/objectives.hpp"
#include "chainopt/smoothness.hpp"

namespace chainopt {

enum class StepPolicy { Certified, User };

struct TrainConfig {
  BoundedDomain dom;
  StepPolicy policy = StepPolicy::Certified;
  double gamma = 0.0;                   // user step
  LogReal certified_L = LogReal::inf();  // L_F on the domain, used by the certified policy
  int steps = 100;
  Index batch = 0;  // 0 = full batch
  std::uint64_t seed = 0;
  double eps = 0.0;  // stop once the gradient-mapping norm is <= eps
};

struct TrainTrace {
  double gamma = 0.0;
  std::vector<double> value;         // F(u_k)
  std::vector<double> mapping_norm;  // |u_k - u_{k+1}| / gamma with the full gradient
  std::vector<bool> projected;       // projection active at step k
  std::vector<double> variance;      // |g_batch - g_full|^2 (stochastic runs)
  Vector u;                          // last iterate
  void write_csv(std::ostream& os) const;
};

struct NotSmooth : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Blockwise radial projection onto the product of balls.
Vector project_domain(const Chain& chain, const Vector& u, const BoundedDomain& dom);

// F = h o f + r with the certified step; throws NotSmooth when L_F is infinite.
double certified_gamma(const TrainConfig& cfg, bool stochastic);

TrainTrace train_pgd(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u0,
                     const TrainConfig& cfg);
TrainTrace train_sgd(const Chain& chain, const Objective& h, const Regularizer& r, const Vector& x0, const Vector& u0,
                     const TrainConfig& cfg);

// Smoothness constant of u -> h(f(x0, u)) + r(u) on the domain from the catalog of a spec.
LogReal certify_objective(const ChainSpec& spec, const BoundedDomain& dom, const Chain& chain, const Objective& h,
                          const LossConstants& hc, double L_r, const Vector& x0);

}  // namespace chainopt
