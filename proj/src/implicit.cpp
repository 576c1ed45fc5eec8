#include "chainopt/implicit.hpp"

#include <cmath>

namespace chainopt {

void InnerProblem::validate() const {
  if (alpha_dim < 0 || beta_dim < 1) throw DimensionError("inner problem: bad dimensions");
  if (!grad_beta || !hess_bb || !hess_ab) throw std::invalid_argument("inner problem: derivative callbacks missing");
  if (!(mu > 0)) throw std::invalid_argument("inner problem: strong convexity modulus must be positive");
  if (!(L >= mu) || !(H >= 0)) throw std::invalid_argument("inner problem: need L >= mu and H >= 0");
}

InnerSolution solve_inner(const InnerProblem& p, const Vector& alpha, double tol, const Vector* init, int max_iter) {
  p.validate();
  if (!(tol > 0)) throw std::invalid_argument("solve_inner: tol must be positive");
  if (alpha.size() != p.alpha_dim) throw DimensionError("solve_inner: alpha has the wrong dimension");
  const double step = 1.0 / (p.L_beta > 0 ? p.L_beta : p.L);
  InnerSolution s;
  s.beta = init ? *init : Vector::Zero(p.beta_dim);
  Vector g = p.grad_beta(alpha, s.beta);
  while (g.norm() > tol) {
    if (s.iterations >= max_iter)
      throw InnerSolveError("solve_inner: no convergence after " + std::to_string(max_iter) + " gradient steps");
    s.beta -= step * g;
    g = p.grad_beta(alpha, s.beta);
    ++s.iterations;
  }
  s.grad_norm = g.norm();
  s.dist_bound = s.grad_norm / p.mu;
  return s;
}

Matrix implicit_gradient(const InnerProblem& p, const Vector& alpha, const Vector& beta) {
  const Matrix Hbb = p.hess_bb(alpha, beta);
  Eigen::LLT<Matrix> llt(0.5 * (Hbb + Hbb.transpose()));
  if (llt.info() != Eigen::Success)
    throw InnerSolveError("implicit gradient: inner Hessian is not positive definite (strong convexity violated)");
  // -Hab Hbb^{-1} = -(Hbb^{-1} Hab^T)^T
  return -llt.solve(Matrix(p.hess_ab(alpha, beta).transpose())).transpose();
}

SmoothTriple implicit_smoothness(const InnerProblem& p) {
  const double k = p.L / p.mu;
  return {LogReal::inf(), LogReal::from(k), LogReal::from(p.H / p.mu * (1 + k) * (1 + k))};
}

double implicit_error_bound(const InnerProblem& p, double e) { return p.H / p.mu * (1 + p.L / p.mu) * e; }

ConstantAudit audit_constants(const InnerProblem& p, std::mt19937_64& rng, int probes) {
  p.validate();
  ConstantAudit a;
  for (int i = 0; i < probes; ++i, ++a.probes) {
    const Vector al = random_vector(p.alpha_dim, rng), be = random_vector(p.beta_dim, rng);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(p.hess_bb(al, be));
    if (es.eigenvalues().minCoeff() < p.mu * (1 - 1e-9))
      a.warnings.push_back("probe " + std::to_string(i) + ": inner Hessian eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + " below mu");
    if (p.grad_alpha) {
      const Vector dal = random_vector(p.alpha_dim, rng), dbe = random_vector(p.beta_dim, rng);
      const double gap = std::sqrt(dal.squaredNorm() + dbe.squaredNorm());
      Vector ga(p.alpha_dim + p.beta_dim), gb(p.alpha_dim + p.beta_dim);
      ga << p.grad_alpha(al, be), p.grad_beta(al, be);
      gb << p.grad_alpha(al + dal, be + dbe), p.grad_beta(al + dal, be + dbe);
      if ((ga - gb).norm() > p.L * gap * (1 + 1e-9))
        a.warnings.push_back("probe " + std::to_string(i) + ": gradient slope above L");
    }
  }
  return a;
}

InnerProblem make_projection_inner(const Matrix& M) {
  InnerProblem p;
  p.alpha_dim = M.cols();
  p.beta_dim = M.rows();
  p.value = [M](const Vector& a, const Vector& b) { return 0.5 * (b - M * a).squaredNorm(); };
  p.grad_beta = [M](const Vector& a, const Vector& b) { return Vector(b - M * a); };
  p.grad_alpha = [M](const Vector& a, const Vector& b) { return Vector(-M.transpose() * (b - M * a)); };
  p.hess_bb = [M](const Vector&, const Vector&) { return Matrix(Matrix::Identity(M.rows(), M.rows())); };
  p.hess_ab = [M](const Vector&, const Vector&) { return Matrix(-M.transpose()); };
  const double s = M.size() ? operator_norm(M) : 0.0;
  p.mu = 1.0;
  p.L = 1.0 + s * s;
  p.L_beta = 1.0;
  p.H = 0.0;
  return p;
}

InnerProblem make_linear_inner(const Matrix& A) {
  InnerProblem p;
  p.alpha_dim = p.beta_dim = A.rows();
  p.value = [A](const Vector& a, const Vector& b) { return 0.5 * b.dot(A * b) - a.dot(b); };
  p.grad_beta = [A](const Vector& a, const Vector& b) { return Vector(A * b - a); };
  p.grad_alpha = [](const Vector&, const Vector& b) { return Vector(-b); };
  p.hess_bb = [A](const Vector&, const Vector&) { return A; };
  p.hess_ab = [A](const Vector&, const Vector&) { return Matrix(-Matrix::Identity(A.rows(), A.rows())); };
  const Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  p.mu = es.eigenvalues().minCoeff();
  const Index n = A.rows();
  Matrix Hfull = Matrix::Zero(2 * n, 2 * n);
  Hfull.bottomRightCorner(n, n) = A;
  Hfull.topRightCorner(n, n) = -Matrix::Identity(n, n);
  Hfull.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  p.L = operator_norm(Hfull);
  p.L_beta = es.eigenvalues().maxCoeff();
  p.H = 0.0;
  return p;
}

namespace {
double logcosh(double z) { return std::abs(z) + std::log1p(std::exp(-2 * std::abs(z))) - std::log(2.0); }
}  // namespace

InnerProblem make_logcosh_inner(const Matrix& A, const Matrix& M, const Matrix& N, double c) {
  const Index b = A.rows(), a = M.cols();
  if (M.rows() != b || N.rows() != b || N.cols() != a) throw DimensionError("logcosh inner: shape mismatch");
  if (c < 0) throw std::invalid_argument("logcosh inner: c must be nonnegative");
  InnerProblem p;
  p.alpha_dim = a;
  p.beta_dim = b;
  auto z = [N](const Vector& al, const Vector& be) { return Vector(be + N * al); };
  p.value = [=](const Vector& al, const Vector& be) {
    const Vector zz = z(al, be);
    double s = 0.0;
    for (Index i = 0; i < b; ++i) s += logcosh(zz(i));
    return 0.5 * be.dot(A * be) - be.dot(M * al) + c * s;
  };
  p.grad_beta = [=](const Vector& al, const Vector& be) {
    return Vector(A * be - M * al + c * z(al, be).array().tanh().matrix());
  };
  p.grad_alpha = [=](const Vector& al, const Vector& be) {
    return Vector(-M.transpose() * be + c * N.transpose() * z(al, be).array().tanh().matrix());
  };
  auto sech2 = [=](const Vector& al, const Vector& be) {
    return Vector((1.0 - z(al, be).array().tanh().square()).matrix());
  };
  p.hess_bb = [=](const Vector& al, const Vector& be) {
    Matrix h = A;
    h.diagonal() += c * sech2(al, be);
    return h;
  };
  p.hess_ab = [=](const Vector& al, const Vector& be) {
    return Matrix(-M.transpose() + c * N.transpose() * sech2(al, be).asDiagonal());
  };
  const Eigen::SelfAdjointEigenSolver<Matrix> es(A);
  p.mu = es.eigenvalues().minCoeff();
  Matrix Q = Matrix::Zero(a + b, a + b);
  Q.bottomRightCorner(b, b) = A;
  Q.topRightCorner(a, b) = -M.transpose();
  Q.bottomLeftCorner(b, a) = -M;
  Matrix K(b, a + b);
  K << N, Matrix::Identity(b, b);
  const double kn = operator_norm(K);
  p.L = operator_norm(Q) + c * kn * kn;
  p.L_beta = es.eigenvalues().maxCoeff() + c;
  p.H = c * 4.0 / (3.0 * std::sqrt(3.0)) * kn * kn * kn;
  return p;
}

namespace {

class ImplicitLinearization : public Linearization {
 public:
  ImplicitLinearization(Vector out, Matrix grad, Index x_dim) : out_(std::move(out)), grad_(std::move(grad)), xd_(x_dim) {}
  const Vector& output() const override { return out_; }
  std::pair<Vector, Vector> vjp(const Vector& lam, std::uint64_t* units) const override {
    if (units) *units += std::uint64_t(grad_.size());
    const Vector g = grad_ * lam;
    return {g.head(xd_), g.tail(g.size() - xd_)};
  }
  Vector jvp(const Vector& dx, const Vector& du) const override {
    Vector d(dx.size() + du.size());
    d << dx, du;
    return grad_.transpose() * d;
  }

 private:
  Vector out_;
  Matrix grad_;
  Index xd_;
};

class ImplicitLayer : public Layer {
 public:
  ImplicitLayer(InnerProblem p, Index x_dim, double tol) : p_(std::move(p)), xd_(x_dim), tol_(tol) {
    p_.validate();
    if (xd_ < 0 || xd_ > p_.alpha_dim) throw DimensionError("implicit layer: x dimension exceeds alpha");
  }
  std::string describe() const override { return "implicit(" + std::to_string(p_.beta_dim) + ")"; }
  Index in_dim() const override { return xd_; }
  Index out_dim() const override { return p_.beta_dim; }
  Index param_dim() const override { return p_.alpha_dim - xd_; }

  Vector value(const Vector& x, const Vector& u) const override { return solve_inner(p_, join(x, u), tol_).beta; }
  std::unique_ptr<Linearization> linearize(const Vector& x, const Vector& u) const override {
    const Vector al = join(x, u);
    Vector beta = solve_inner(p_, al, tol_).beta;
    Matrix g = implicit_gradient(p_, al, beta);
    return std::make_unique<ImplicitLinearization>(std::move(beta), std::move(g), xd_);
  }
  bool twice_differentiable() const override { return false; }
  SecondOrder second_contract(const Vector&, const Vector&, const Vector&) const override {
    throw SecondOrderUnavailable("implicit layer: second-order information is not provided");
  }
  LayerSparsity sparsity() const override {
    LayerSparsity s;
    s.a = std::uint64_t(p_.alpha_dim * p_.beta_dim);
    return s;
  }

 private:
  static Vector join(const Vector& x, const Vector& u) {
    Vector a(x.size() + u.size());
    a << x, u;
    return a;
  }
  InnerProblem p_;
  Index xd_;
  double tol_;
};

}  // namespace

LayerPtr make_implicit_layer(InnerProblem p, Index x_dim, double tol) {
  return std::make_shared<ImplicitLayer>(std::move(p), x_dim, tol);
}

}  // namespace chainopt
