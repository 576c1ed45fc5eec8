#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "chainopt/layers.hpp"
#include "chainopt/smoothness.hpp"

namespace chainopt {

// zeta(alpha, beta), strongly convex in beta. Constants are declared by the caller.
struct InnerProblem {
  Index alpha_dim = 0, beta_dim = 0;
  std::function<double(const Vector&, const Vector&)> value;
  std::function<Vector(const Vector&, const Vector&)> grad_beta;
  std::function<Vector(const Vector&, const Vector&)> grad_alpha;
  std::function<Matrix(const Vector&, const Vector&)> hess_bb;  // b x b
  std::function<Matrix(const Vector&, const Vector&)> hess_ab;  // a x b
  double mu = 1.0;       // strong convexity in beta
  double L = 1.0;        // gradient Lipschitz constant (joint)
  double H = 0.0;        // Hessian Lipschitz constant (joint)
  double L_beta = 0.0;   // gradient Lipschitz constant in beta alone; 0 means use L
  void validate() const;
};

struct InnerSolution {
  Vector beta;
  int iterations = 0;
  double grad_norm = 0.0;
  double dist_bound = 0.0;  // |beta - g(alpha)| <= grad_norm / mu
};

struct InnerSolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gradient descent with step 1 / L_beta until |grad_beta zeta| <= tol.
InnerSolution solve_inner(const InnerProblem& p, const Vector& alpha, double tol, const Vector* init = nullptr,
                          int max_iter = 100000);

// -hess_ab [hess_bb]^{-1}, an alpha_dim x beta_dim matrix.
Matrix implicit_gradient(const InnerProblem& p, const Vector& alpha, const Vector& beta);

SmoothTriple implicit_smoothness(const InnerProblem& p);

// H mu^{-1} (1 + L mu^{-1}) e
double implicit_error_bound(const InnerProblem& p, double e);

struct ConstantAudit {
  int probes = 0;
  std::vector<std::string> warnings;
};
// Random finite-difference probes of mu and L; violations are reported, not thrown.
ConstantAudit audit_constants(const InnerProblem& p, std::mt19937_64& rng, int probes = 20);

// 1/2 |beta - M alpha|^2
InnerProblem make_projection_inner(const Matrix& M);
// 1/2 beta^T A beta - alpha^T beta, A positive definite
InnerProblem make_linear_inner(const Matrix& A);
// 1/2 beta^T A beta - beta^T M alpha + c sum_i log cosh(beta_i + (N alpha)_i)
InnerProblem make_logcosh_inner(const Matrix& A, const Matrix& M, const Matrix& N, double c);

// phi(x, u) = argmin_beta zeta((x; u), beta). Solved to `tol` on every evaluation.
LayerPtr make_implicit_layer(InnerProblem p, Index x_dim, double tol = 1e-10);

}  // namespace chainopt
