#pragma once

#include <string>
#include <vector>

#include "chainopt/chain.hpp"
#include "chainopt/logreal.hpp"

namespace chainopt {

// Output bound m, Lipschitz constant l and smoothness constant L of a map on a set.
struct SmoothTriple {
  LogReal m = LogReal::inf(), ell = LogReal::inf(), L = LogReal::inf();
};

// b(x, u) = beta(x, u) + beta_u u + beta_x x + beta_0 with |beta| <= Lb, |beta_u| <= lu, |beta_x| <= lx.
struct BiAffineConstants {
  LogReal Lb, lu, lx;
  LogReal b0;  // |b(0, 0)| = |beta_0|
};

struct ActConstants {
  std::string name;
  LogReal m = LogReal::inf(), ell = LogReal::one(), L = LogReal::zero();
  LogReal grad0 = LogReal::one();  // |grad a(0)|
  LogReal val0;                    // |a(0)|
};

struct StageConstants {
  std::string label;
  BiAffineConstants b;
  std::vector<ActConstants> acts;
};

struct BoundedDomain {
  std::vector<double> radii;  // R_1..R_tau
  double x0_norm = 1.0;
  static BoundedDomain uniform(Index tau, double R, double x0_norm = 1.0) {
    return {std::vector<double>(size_t(tau), R), x0_norm};
  }
  void validate(Index tau) const;
  double diameter() const;  // 2 sqrt(sum R_t^2)
};

ActConstants activation_constants(const ActSpec& a, const Shape& in, Index batch);
BiAffineConstants biaffine_constants(const LayerSpec& L, const LayerShapes& sh, Index batch);
// Constants of every stage of a spec, residual layers included.
std::vector<StageConstants> catalog_constants(const ChainSpec& spec);

struct Refined {
  LogReal ell, m;
};
Refined refine_on_ball(const SmoothTriple& t, LogReal grad0, LogReal f0, LogReal R);

struct Propagation {
  SmoothTriple out;
  std::vector<SmoothTriple> stages;  // (m_t, l_t, L_t) after each layer
};
Propagation propagate_chain(const std::vector<StageConstants>& stages, const BoundedDomain& dom);

struct LipSmooth {
  LogReal ell, L;
};
LipSmooth generic_recursion(const std::vector<LogReal>& ell_phi, const std::vector<LogReal>& L_phi);

// Layer x -> a(b(x, u_t)) with u_t fixed: |d b / d x| and |b(0, u_t)|.
struct InputStage {
  LogReal lip;
  LogReal b0;
  std::vector<ActConstants> acts;
};
std::vector<InputStage> input_stages(const std::vector<StageConstants>& stages, const Chain& chain, const Vector& u);
// Triple of x0 -> f(x0, u) on the ball of radius R.
SmoothTriple input_smoothness(const std::vector<InputStage>& stages, LogReal R);

// Constants of v -> f(u* + v) on the balls of radii R'.
std::pair<std::vector<StageConstants>, BoundedDomain> recenter_domain(const std::vector<StageConstants>& stages,
                                                                      const BoundedDomain& dom,
                                                                      const std::vector<double>& ustar_norms,
                                                                      const std::vector<double>& new_radii);

struct LossConstants {
  LogReal ell, L;
};
struct LossContext {
  double rho_c = 0.0, rho_y = 0.0;  // output and label radii for the squared loss
  Index n = 1;                      // clustered points
};
LossConstants loss_constants(const std::string& name, const LossContext& ctx = {});

// L_psi l~_h + l_psi^2 L_h + L_r with l~_h = min(l_h, |grad h(psi(u_ref))| + L_h l_psi D).
LogReal objective_smoothness(const SmoothTriple& psi, const LossConstants& h, LogReal grad_at_ref, LogReal L_r,
                             const BoundedDomain& dom);

}  // namespace chainopt
