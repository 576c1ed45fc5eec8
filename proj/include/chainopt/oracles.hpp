#pragma once

#include <cstdint>
#include <vector>

#include "chainopt/autodiff.hpp"
#include "chainopt/objectives.hpp"

namespace chainopt {

// min sum_t 1/2 y_t^T P_t y_t + p_t^T y_t + y_{t-1}^T R_t v_t + 1/2 v_t^T Q_t v_t + q_t^T v_t + kappa/2 |v_t|^2
// s.t. y_t = A_t y_{t-1} + B_t v_t, y_0 = 0. Vectors are indexed by stage t = 1..tau at position t-1.
struct LQProblem {
  std::vector<Matrix> A;  // d_t x d_{t-1}
  std::vector<Matrix> B;  // d_t x p_t
  std::vector<Matrix> P;  // d_t x d_t
  std::vector<Vector> p;  // d_t
  std::vector<Matrix> Q;  // p_t x p_t
  std::vector<Vector> q;  // p_t
  std::vector<Matrix> R;  // d_{t-1} x p_t
  double kappa = 1.0;

  Index tau() const { return Index(A.size()); }
  Index state_dim(Index t) const { return t == 0 ? A[0].cols() : A[t - 1].rows(); }
  Index param_dim(Index t) const { return B[t - 1].cols(); }
  Index total_params() const;
  Index total_states() const;
  // shape and symmetry checks; throws DimensionError
  void validate() const;
};

enum class OracleKind { Gradient, GaussNewton, Newton };

struct OracleStep {
  Vector v;              // concatenated v*_1..v*_tau
  double kappa = 0.0;    // regularisation actually used
  int retries = 0;       // kappa doublings (Newton DP)
  int cg_iterations = 0;
  std::uint64_t autodiff_calls = 0;
  Vector mu;             // dual solution (Gauss-Newton)
};

struct InfeasibleModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

LQProblem build_lq(const Tape& tape, const Objective& h, const Regularizer& r, OracleKind kind, double kappa);

// Value of the LQ objective at v after rolling out the dynamics.
double lq_value(const LQProblem& lq, const Vector& v);

OracleStep solve_gradient_step(const LQProblem& lq, double gamma);
OracleStep solve_newton_dp(const LQProblem& lq, int max_doublings = 60);
OracleStep solve_dense_reference(const LQProblem& lq, Index cap = 2000);

OracleStep solve_gauss_newton_dual(const Tape& tape, const Objective& h, const Regularizer& r, double kappa);

// Primal Gauss-Newton objective and the dual objective evaluated at mu (up to the same constant).
double gauss_newton_primal(const Tape& tape, const Objective& h, const Regularizer& r, double kappa, const Vector& v);
double gauss_newton_dual_value(const Tape& tape, const Objective& h, const Regularizer& r, double kappa,
                               const Vector& mu);

}  // namespace chainopt
