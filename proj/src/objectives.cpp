#include "chainopt/objectives.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace chainopt {

std::unique_ptr<Objective> Objective::subset(const std::vector<Index>&) const {
  throw std::logic_error("objective " + name() + " does not decompose over samples");
}

ValueGradient eval_squared(const Vector& yhat, const Vector& y, Index n) {
  if (yhat.size() != y.size() || n < 1 || yhat.size() % n != 0) throw DimensionError("squared loss: dims");
  const Vector r = yhat - y;
  return {0.5 * r.squaredNorm() / double(n), r / double(n)};
}

namespace {

double logsumexp(const Eigen::Ref<const Vector>& z) {
  const double mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

Vector softmax(const Eigen::Ref<const Vector>& z) {
  Vector e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

// Weighted per-sample losses: h(yhat) = sum_i w_i loss(yhat_i, y_i).
class SampleLoss final : public Objective {
 public:
  enum Kind { Squared, Logistic };
  SampleLoss(Kind k, Vector y, Index n, Vector w) : k_(k), y_(std::move(y)), n_(n), w_(std::move(w)) {
    if (n_ < 1 || y_.size() % n_ != 0) throw DimensionError("labels must stack n samples of equal length");
    q_ = y_.size() / n_;
    if (k_ == Logistic)
      for (Index i = 0; i < n_; ++i) {
        auto yi = y_.segment(i * q_, q_);
        if ((yi.array() * (1.0 - yi.array())).abs().maxCoeff() > 0 || std::abs(yi.sum() - 1.0) > 0)
          throw std::invalid_argument("logistic labels must be one-hot");
      }
  }
  std::string name() const override { return k_ == Squared ? "squared" : "logistic"; }
  Index dim() const override { return y_.size(); }
  Index samples() const override { return n_; }
  double value(const Vector& yh) const override {
    double v = 0.0;
    for (Index i = 0; i < n_; ++i) {
      if (w_(i) == 0.0) continue;
      auto a = yh.segment(i * q_, q_);
      auto b = y_.segment(i * q_, q_);
      v += w_(i) * (k_ == Squared ? 0.5 * (a - b).squaredNorm() : -b.dot(a) + logsumexp(a));
    }
    return v;
  }
  Vector gradient(const Vector& yh) const override {
    Vector g = Vector::Zero(y_.size());
    for (Index i = 0; i < n_; ++i) {
      if (w_(i) == 0.0) continue;
      auto a = yh.segment(i * q_, q_);
      auto b = y_.segment(i * q_, q_);
      g.segment(i * q_, q_) = w_(i) * (k_ == Squared ? Vector(a - b) : Vector(softmax(a) - b));
    }
    return g;
  }
  Matrix hessian(const Vector& yh) const override {
    Matrix H = Matrix::Zero(y_.size(), y_.size());
    for (Index i = 0; i < n_; ++i) {
      if (w_(i) == 0.0) continue;
      if (k_ == Squared) {
        H.block(i * q_, i * q_, q_, q_).diagonal().setConstant(w_(i));
      } else {
        const Vector s = softmax(yh.segment(i * q_, q_));
        Matrix b = -s * s.transpose();
        b.diagonal() += s;
        H.block(i * q_, i * q_, q_, q_) = w_(i) * b;
      }
    }
    return H;
  }
  std::unique_ptr<Objective> subset(const std::vector<Index>& idx) const override {
    Vector w = Vector::Zero(n_);
    for (auto i : idx) w(i) += 1.0 / double(idx.size());
    return std::make_unique<SampleLoss>(k_, y_, n_, w);
  }

 private:
  Kind k_;
  Vector y_;
  Index n_, q_ = 0;
  Vector w_;
};

class ConvexCluster final : public Objective {
 public:
  ConvexCluster(Index q, Index n, double tol) : q_(q), n_(n), tol_(tol) {}
  std::string name() const override { return "convex-cluster"; }
  Index dim() const override { return q_ * n_; }
  double value(const Vector& yh) const override { return eval_convex_cluster(yh, n_, tol_).value; }
  Vector gradient(const Vector& yh) const override { return eval_convex_cluster(yh, n_, tol_).grad; }
  bool has_hessian() const override { return false; }
  Matrix hessian(const Vector&) const override {
    throw std::logic_error("convex clustering objective has no closed-form Hessian");
  }

 private:
  Index q_, n_;
  double tol_;
};

class Quadratic final : public Objective {
 public:
  Quadratic(Vector c, Matrix P) : c_(std::move(c)), P_(std::move(P)) {}
  std::string name() const override { return "quadratic"; }
  Index dim() const override { return c_.size(); }
  double value(const Vector& y) const override { return c_.dot(y) + 0.5 * y.dot(P_ * y); }
  Vector gradient(const Vector& y) const override { return c_ + P_ * y; }
  Matrix hessian(const Vector&) const override { return P_; }

 private:
  Vector c_;
  Matrix P_;
};

class ZeroReg final : public Regularizer {
 public:
  double value(const Vector&) const override { return 0.0; }
  Vector gradient(const Vector& u) const override { return Vector::Zero(u.size()); }
  Matrix hessian(const Vector& u) const override { return Matrix::Zero(u.size(), u.size()); }
  Matrix hessian_block(const Vector&, Index, Index len) const override { return Matrix::Zero(len, len); }
  double smoothness() const override { return 0.0; }
};

class Ridge final : public Regularizer {
 public:
  explicit Ridge(double rho) : rho_(rho) {
    if (rho < 0) throw std::invalid_argument("ridge weight must be nonnegative");
  }
  double value(const Vector& u) const override { return 0.5 * rho_ * u.squaredNorm(); }
  Vector gradient(const Vector& u) const override { return rho_ * u; }
  Matrix hessian(const Vector& u) const override { return rho_ * Matrix::Identity(u.size(), u.size()); }
  Matrix hessian_block(const Vector&, Index, Index len) const override {
    return rho_ * Matrix::Identity(len, len);
  }
  double smoothness() const override { return rho_; }

 private:
  double rho_;
};

}  // namespace

ValueGradient eval_logistic(const Vector& yhat, const Vector& y, Index n) {
  SampleLoss h(SampleLoss::Logistic, y, n, Vector::Constant(n, 1.0 / double(n)));
  if (yhat.size() != y.size()) throw DimensionError("logistic loss: dims");
  return {h.value(yhat), h.gradient(yhat)};
}

ClusterResult eval_convex_cluster(const Vector& yhat, Index n, double tol, int max_iter) {
  if (n < 1 || yhat.size() % n != 0) throw DimensionError("convex clustering: dims");
  if (!(tol > 0)) throw std::invalid_argument("convex clustering: tol must be positive");
  const Index q = yhat.size() / n;
  ClusterResult r;
  if (n == 1) {
    r.grad = Vector::Zero(yhat.size());
    r.y_star = yhat;
    return r;
  }
  const Index npair = n * (n - 1) / 2;
  // dual variables z_g for g = (i < j), each constrained to the unit ball
  Matrix z = Matrix::Zero(q, npair), zprev = z, w = z;
  auto Dt = [&](const Matrix& zz) {
    Vector v = Vector::Zero(yhat.size());
    Index g = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j, ++g) {
        v.segment(i * q, q) += zz.col(g);
        v.segment(j * q, q) -= zz.col(g);
      }
    return v;
  };
  auto primal = [&](const Vector& y) {
    double v = 0.5 * (y - yhat).squaredNorm();
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) v += (y.segment(i * q, q) - y.segment(j * q, q)).norm();
    return v;
  };
  const double step = 1.0 / double(n);  // |D|^2 = n for the complete graph
  const double yn2 = yhat.squaredNorm();
  double t = 1.0;
  double prev_dual = -std::numeric_limits<double>::infinity();
  Vector y = yhat;
  for (int it = 1; it <= max_iter; ++it) {
    y = yhat - Dt(w);
    Index g = 0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j, ++g) {
        Vector c = w.col(g) + step * (y.segment(i * q, q) - y.segment(j * q, q));
        const double nc = c.norm();
        if (nc > 1.0) c /= nc;
        z.col(g) = c;
      }
    const Vector yz = yhat - Dt(z);
    const double dual = 0.5 * yn2 - 0.5 * yz.squaredNorm();
    const double gap = primal(yz) - dual;
    r.iterations = it;
    r.gap = gap;
    if (gap <= tol) {
      r.y_star = yz;
      r.value = dual + gap;
      r.grad = yhat - yz;
      return r;
    }
    if (dual < prev_dual) {
      // momentum restart when the dual value drops
      t = 1.0;
      w = z;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      w = z + ((t - 1.0) / tn) * (z - zprev);
      t = tn;
    }
    prev_dual = dual;
    zprev = z;
  }
  throw std::runtime_error("convex clustering: inner iteration cap reached");
}

std::unique_ptr<Objective> make_squared(Vector y, Index n) {
  const Vector w = Vector::Constant(n, 1.0 / double(n));
  return std::make_unique<SampleLoss>(SampleLoss::Squared, std::move(y), n, w);
}
std::unique_ptr<Objective> make_logistic(Vector y, Index n) {
  const Vector w = Vector::Constant(n, 1.0 / double(n));
  return std::make_unique<SampleLoss>(SampleLoss::Logistic, std::move(y), n, w);
}
std::unique_ptr<Objective> make_convex_cluster(Index q, Index n, double tol) {
  return std::make_unique<ConvexCluster>(q, n, tol);
}
std::unique_ptr<Objective> make_quadratic(Vector c, Matrix P) { return std::make_unique<Quadratic>(std::move(c), std::move(P)); }
std::unique_ptr<Regularizer> make_zero_regularizer() { return std::make_unique<ZeroReg>(); }
std::unique_ptr<Regularizer> make_ridge(double rho) { return std::make_unique<Ridge>(rho); }

}  // namespace chainopt
