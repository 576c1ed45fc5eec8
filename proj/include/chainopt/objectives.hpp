#pragma once

#include <memory>
#include <string>

#include "chainopt/tensor.hpp"

namespace chainopt {

// Terminal objective h on the chain output (n samples of dimension q, stacked).
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::string name() const = 0;
  virtual Index dim() const = 0;
  virtual double value(const Vector& yhat) const = 0;
  virtual Vector gradient(const Vector& yhat) const = 0;
  virtual bool has_hessian() const { return true; }
  virtual Matrix hessian(const Vector& yhat) const = 0;
  // Number of per-sample terms in the finite sum; 1 when not decomposable.
  virtual Index samples() const { return 1; }
  // Objective restricted to a subset of samples, averaged over the subset.
  virtual std::unique_ptr<Objective> subset(const std::vector<Index>& idx) const;
};

struct ValueGradient {
  double value = 0.0;
  Vector grad;
};

// Labels are stacked per sample: y = (y^(1); ...; y^(n)), each of length q.
ValueGradient eval_squared(const Vector& yhat, const Vector& y, Index n);
ValueGradient eval_logistic(const Vector& yhat, const Vector& y, Index n);

struct ClusterResult {
  double value = 0.0;
  Vector grad;
  Vector y_star;
  int iterations = 0;
  double gap = 0.0;
};
// min_y 1/2 |y - yhat|^2 + sum_{i<j} |y_i - y_j|, solved on the dual to a duality gap <= tol.
ClusterResult eval_convex_cluster(const Vector& yhat, Index n, double tol = 1e-10, int max_iter = 200000);

std::unique_ptr<Objective> make_squared(Vector y, Index n);
std::unique_ptr<Objective> make_logistic(Vector y, Index n);
std::unique_ptr<Objective> make_convex_cluster(Index q, Index n, double tol = 1e-10);
// h(y) = c^T y + 1/2 y^T P y; used for linear/quadratic test objectives
std::unique_ptr<Objective> make_quadratic(Vector c, Matrix P);

// Decomposable regulariser r(u) = sum_t r_t(u_t).
class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual double value(const Vector& u) const = 0;
  virtual Vector gradient(const Vector& u) const = 0;
  virtual Matrix hessian(const Vector& u) const = 0;  // block diagonal by construction
  // diagonal block for u[off, off + len) of the Hessian
  virtual Matrix hessian_block(const Vector& u, Index off, Index len) const {
    return hessian(u).block(off, off, len, len);
  }
  virtual double smoothness() const = 0;              // L_r
};

std::unique_ptr<Regularizer> make_zero_regularizer();
// (rho / 2) |u|^2
std::unique_ptr<Regularizer> make_ridge(double rho);

}  // namespace chainopt
