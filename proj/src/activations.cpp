#include "chainopt/activations.hpp"

#include <algorithm>
#include <cmath>

namespace chainopt {

const char* act_kind_name(ActKind k) {
  switch (k) {
    case ActKind::Identity: return "identity";
    case ActKind::ReLU: return "relu";
    case ActKind::Softplus: return "softplus";
    case ActKind::ShiftedSoftplus: return "softplus0";
    case ActKind::Sigmoid: return "sigmoid";
    case ActKind::Softmax: return "softmax";
    case ActKind::AvgPool: return "avgpool";
    case ActKind::MaxPool: return "maxpool";
    case ActKind::BatchNorm: return "batchnorm";
    case ActKind::TailPass: return "tailpass";
  }
  return "?";
}

namespace scalar_fn {
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace scalar_fn

Index PatchSet::max_multiplicity() const {
  std::vector<Index> c(in_dim, 0);
  for (auto i : idx)
    if (i >= 0) ++c[i];
  Index m = 0;
  for (auto v : c) m = std::max(m, v);
  return m;
}

PatchSet PatchSet::conv2d(Index C, Index H, Index W, Index kh, Index kw, Index sh, Index sw, Index ph, Index pw) {
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) throw DimensionError("conv2d: kernel and stride must be positive");
  const Index Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  if (H + 2 * ph < kh || W + 2 * pw < kw) throw DimensionError("conv2d: kernel larger than padded input");
  PatchSet p;
  p.in_dim = C * H * W;
  p.patch_size = C * kh * kw;
  p.idx.reserve(Ho * Wo * p.patch_size);
  for (Index oh = 0; oh < Ho; ++oh)
    for (Index ow = 0; ow < Wo; ++ow)
      for (Index c = 0; c < C; ++c)
        for (Index i = 0; i < kh; ++i)
          for (Index j = 0; j < kw; ++j) {
            const Index h = oh * sh + i - ph, w = ow * sw + j - pw;
            const bool inside = h >= 0 && h < H && w >= 0 && w < W;
            p.idx.push_back(inside ? c * H * W + h * W + w : -1);
          }
  return p;
}

PatchSet PatchSet::pool2d(Index C, Index H, Index W, Index kh, Index kw, Index sh, Index sw) {
  if (H < kh || W < kw || sh < 1 || sw < 1) throw DimensionError("pool2d: window larger than input");
  const Index Ho = (H - kh) / sh + 1, Wo = (W - kw) / sw + 1;
  PatchSet p;
  p.in_dim = C * H * W;
  p.patch_size = kh * kw;
  p.idx.reserve(C * Ho * Wo * p.patch_size);
  for (Index c = 0; c < C; ++c)
    for (Index oh = 0; oh < Ho; ++oh)
      for (Index ow = 0; ow < Wo; ++ow)
        for (Index i = 0; i < kh; ++i)
          for (Index j = 0; j < kw; ++j) p.idx.push_back(c * H * W + (oh * sh + i) * W + ow * sw + j);
  return p;
}

namespace {

class Elementwise final : public Activation {
 public:
  Elementwise(ActKind k, Index n) : k_(k), n_(n) {}
  ActKind kind() const override { return k_; }
  Index in_dim() const override { return n_; }
  Index out_dim() const override { return n_; }
  bool twice_differentiable() const override { return k_ != ActKind::ReLU; }

  double f(double z) const {
    switch (k_) {
      case ActKind::ReLU: return z > 0 ? z : 0.0;
      case ActKind::Softplus: return scalar_fn::softplus(z);
      case ActKind::ShiftedSoftplus: return scalar_fn::softplus(z) - M_LN2;
      case ActKind::Sigmoid: return scalar_fn::sigmoid(z);
      default: return z;
    }
  }
  double d1(double z) const {
    switch (k_) {
      case ActKind::ReLU: return z > 0 ? 1.0 : 0.0;
      case ActKind::Softplus:
      case ActKind::ShiftedSoftplus: return scalar_fn::sigmoid(z);
      case ActKind::Sigmoid: {
        const double s = scalar_fn::sigmoid(z);
        return s * (1 - s);
      }
      default: return 1.0;
    }
  }
  double d2(double z) const {
    switch (k_) {
      case ActKind::Softplus:
      case ActKind::ShiftedSoftplus: {
        const double s = scalar_fn::sigmoid(z);
        return s * (1 - s);
      }
      case ActKind::Sigmoid: {
        const double s = scalar_fn::sigmoid(z);
        return s * (1 - s) * (1 - 2 * s);
      }
      default: return 0.0;
    }
  }

  Vector value(const Vector& z) const override {
    Vector o(n_);
    for (Index i = 0; i < n_; ++i) o(i) = f(z(i));
    return o;
  }
  Vector vjp(const Vector& z, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    Vector g(n_);
    for (Index i = 0; i < n_; ++i) g(i) = d1(z(i)) * lam(i);
    if (units) *units += n_;
    return g;
  }
  Vector jvp(const Vector& z, const Vector&, const Vector& dz) const override {
    Vector g(n_);
    for (Index i = 0; i < n_; ++i) g(i) = d1(z(i)) * dz(i);
    return g;
  }
  Matrix hess_contract(const Vector& z, const Vector& lam) const override {
    if (!twice_differentiable()) throw SecondOrderUnavailable("relu has no second derivative");
    Vector d(n_);
    for (Index i = 0; i < n_; ++i) d(i) = d2(z(i)) * lam(i);
    return d.asDiagonal();
  }
  std::uint64_t sparsity() const override { return n_; }

 private:
  ActKind k_;
  Index n_;
};

class Softmax final : public Activation {
 public:
  Softmax(Index q, Index m) : q_(q), m_(m) {}
  ActKind kind() const override { return ActKind::Softmax; }
  Index in_dim() const override { return q_ * m_; }
  Index out_dim() const override { return q_ * m_; }

  Vector value(const Vector& z) const override {
    Vector o(q_ * m_);
    for (Index s = 0; s < m_; ++s) {
      auto zs = z.segment(s * q_, q_);
      const double mx = zs.maxCoeff();
      Vector e = (zs.array() - mx).exp();
      o.segment(s * q_, q_) = e / e.sum();
    }
    return o;
  }
  // per-sample Jacobian diag(s) - s s^T, symmetric
  Matrix block(const Vector& out, Index s) const {
    Vector p = out.segment(s * q_, q_);
    Matrix J = -p * p.transpose();
    J.diagonal() += p;
    return J;
  }
  Vector vjp(const Vector&, const Vector& out, const Vector& lam, std::uint64_t* units) const override {
    Vector g(q_ * m_);
    for (Index s = 0; s < m_; ++s) g.segment(s * q_, q_) = block(out, s) * lam.segment(s * q_, q_);
    if (units) *units += sparsity();
    return g;
  }
  Vector jvp(const Vector& z, const Vector& out, const Vector& dz) const override {
    return vjp(z, out, dz, nullptr);
  }
  Matrix hess_contract(const Vector& z, const Vector& lam) const override {
    const Vector out = value(z);
    Matrix H = Matrix::Zero(q_ * m_, q_ * m_);
    for (Index s = 0; s < m_; ++s) {
      const Matrix J = block(out, s);
      const Vector l = lam.segment(s * q_, q_);
      const Vector p = out.segment(s * q_, q_);
      const double c = p.dot(l);
      const Vector jl = J * l;
      Matrix h = (l.array() - c).matrix().asDiagonal() * J;
      h -= p * jl.transpose();
      H.block(s * q_, s * q_, q_, q_) = h;
    }
    return H;
  }
  std::uint64_t sparsity() const override { return std::uint64_t(m_) * q_ * q_; }

 private:
  Index q_, m_;
};

class Pool final : public Activation {
 public:
  Pool(ActKind k, PatchSet p, Index m) : k_(k), p_(std::move(p)), m_(m) {
    for (auto i : p_.idx)
      if (i < 0) throw DimensionError("pooling patches cannot contain padding taps");
  }
  ActKind kind() const override { return k_; }
  Index in_dim() const override { return p_.in_dim * m_; }
  Index out_dim() const override { return p_.count() * m_; }
  bool twice_differentiable() const override { return k_ == ActKind::AvgPool; }

  // argmax inside each window, ties to the lowest patch position
  Index arg(const Vector& z, Index s, Index k) const {
    const auto* pk = p_.patch(k);
    const Index off = s * p_.in_dim;
    Index best = pk[0];
    for (Index j = 1; j < p_.patch_size; ++j)
      if (z(off + pk[j]) > z(off + best)) best = pk[j];
    return best;
  }

  Vector value(const Vector& z) const override {
    const Index np = p_.count();
    Vector o(np * m_);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        const auto* pk = p_.patch(k);
        const Index off = s * p_.in_dim;
        if (k_ == ActKind::AvgPool) {
          double acc = 0.0;
          for (Index j = 0; j < p_.patch_size; ++j) acc += z(off + pk[j]);
          o(s * np + k) = acc / double(p_.patch_size);
        } else {
          o(s * np + k) = z(off + arg(z, s, k));
        }
      }
    return o;
  }
  Vector vjp(const Vector& z, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    const Index np = p_.count();
    Vector g = Vector::Zero(in_dim());
    const double w = 1.0 / double(p_.patch_size);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        const Index off = s * p_.in_dim;
        if (k_ == ActKind::AvgPool) {
          const auto* pk = p_.patch(k);
          for (Index j = 0; j < p_.patch_size; ++j) g(off + pk[j]) += w * lam(s * np + k);
        } else {
          g(off + arg(z, s, k)) += lam(s * np + k);
        }
      }
    if (units) *units += sparsity();
    return g;
  }
  Vector jvp(const Vector& z, const Vector&, const Vector& dz) const override { return value_linear(z, dz); }
  Vector value_linear(const Vector& z, const Vector& dz) const {
    if (k_ == ActKind::AvgPool) return value(dz);
    const Index np = p_.count();
    Vector o(np * m_);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) o(s * np + k) = dz(s * p_.in_dim + arg(z, s, k));
    return o;
  }
  Matrix hess_contract(const Vector&, const Vector&) const override {
    if (k_ == ActKind::MaxPool) throw SecondOrderUnavailable("maxpool has no second derivative");
    return Matrix::Zero(in_dim(), in_dim());
  }
  std::uint64_t sparsity() const override {
    const std::uint64_t per = k_ == ActKind::AvgPool ? std::uint64_t(p_.count()) * p_.patch_size : p_.count();
    return per * m_;
  }

 private:
  ActKind k_;
  PatchSet p_;
  Index m_;
};

// Row-wise normalisation of Z (delta x m), x = Vec(Z): row r holds x[r + delta*i].
class BatchNorm final : public Activation {
 public:
  BatchNorm(Index delta, Index m, double eps) : d_(delta), m_(m), eps_(eps) {
    if (!(eps > 0)) throw std::invalid_argument("batchnorm: eps must be positive");
  }
  ActKind kind() const override { return ActKind::BatchNorm; }
  Index in_dim() const override { return d_ * m_; }
  Index out_dim() const override { return d_ * m_; }

  Vector row(const Vector& z, Index r) const {
    Vector v(m_);
    for (Index i = 0; i < m_; ++i) v(i) = z(r + d_ * i);
    return v;
  }
  void put(Vector& z, Index r, const Vector& v) const {
    for (Index i = 0; i < m_; ++i) z(r + d_ * i) = v(i);
  }
  void stats(const Vector& zr, Vector& c, double& s) const {
    c = zr.array() - zr.mean();
    s = std::sqrt(c.squaredNorm() / double(m_) + eps_);
  }
  Matrix jac(const Vector& zr) const {
    Vector c;
    double s;
    stats(zr, c, s);
    Matrix J = Matrix::Identity(m_, m_) - Matrix::Constant(m_, m_, 1.0 / double(m_));
    J /= s;
    J -= c * c.transpose() / (double(m_) * s * s * s);
    return J;
  }
  Vector value(const Vector& z) const override {
    Vector o(d_ * m_);
    for (Index r = 0; r < d_; ++r) {
      Vector c;
      double s;
      stats(row(z, r), c, s);
      put(o, r, c / s);
    }
    return o;
  }
  Vector vjp(const Vector& z, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    Vector g(d_ * m_);
    for (Index r = 0; r < d_; ++r) put(g, r, jac(row(z, r)) * row(lam, r));
    if (units) *units += sparsity();
    return g;
  }
  Vector jvp(const Vector& z, const Vector& out, const Vector& dz) const override { return vjp(z, out, dz, nullptr); }
  Matrix hess_contract(const Vector& z, const Vector& lam) const override {
    Matrix H = Matrix::Zero(d_ * m_, d_ * m_);
    const double m = double(m_);
    for (Index r = 0; r < d_; ++r) {
      Vector c;
      double s;
      stats(row(z, r), c, s);
      const Vector l = row(lam, r);
      const Vector a = l.array() - l.mean();
      const double ac = a.dot(c);
      const double s3 = s * s * s, s5 = s3 * s * s;
      Matrix P = Matrix::Identity(m_, m_) - Matrix::Constant(m_, m_, 1.0 / m);
      Matrix h = -(a * c.transpose() + c * a.transpose()) / (m * s3) - ac * P / (m * s3) +
                 3.0 * ac * c * c.transpose() / (m * m * s5);
      for (Index i = 0; i < m_; ++i)
        for (Index j = 0; j < m_; ++j) H(r + d_ * i, r + d_ * j) = h(i, j);
    }
    return H;
  }
  std::uint64_t sparsity() const override { return std::uint64_t(d_) * m_ * m_; }

 private:
  Index d_, m_;
  double eps_;
};

class TailPass final : public Activation {
 public:
  TailPass(ActivationPtr inner, Index tail) : a_(std::move(inner)), tail_(tail) {}
  ActKind kind() const override { return ActKind::TailPass; }
  std::string name() const override { return a_->name() + "+pass"; }
  Index in_dim() const override { return a_->in_dim() + tail_; }
  Index out_dim() const override { return a_->out_dim() + tail_; }
  bool twice_differentiable() const override { return a_->twice_differentiable(); }
  Vector join(const Vector& head, const Vector& tail) const {
    Vector o(head.size() + tail.size());
    o << head, tail;
    return o;
  }
  Vector value(const Vector& z) const override {
    return join(a_->value(z.head(a_->in_dim())), z.tail(tail_));
  }
  Vector vjp(const Vector& z, const Vector& out, const Vector& lam, std::uint64_t* units) const override {
    Vector g = join(a_->vjp(z.head(a_->in_dim()), out.head(a_->out_dim()), lam.head(a_->out_dim()), units),
                    lam.tail(tail_));
    if (units) *units += tail_;
    return g;
  }
  Vector jvp(const Vector& z, const Vector& out, const Vector& dz) const override {
    return join(a_->jvp(z.head(a_->in_dim()), out.head(a_->out_dim()), dz.head(a_->in_dim())), dz.tail(tail_));
  }
  Matrix hess_contract(const Vector& z, const Vector& lam) const override {
    Matrix H = Matrix::Zero(in_dim(), in_dim());
    H.topLeftCorner(a_->in_dim(), a_->in_dim()) = a_->hess_contract(z.head(a_->in_dim()), lam.head(a_->out_dim()));
    return H;
  }
  std::uint64_t sparsity() const override { return a_->sparsity() + tail_; }

 private:
  ActivationPtr a_;
  Index tail_;
};

}  // namespace

ActivationPtr make_elementwise(ActKind kind, Index dim) {
  switch (kind) {
    case ActKind::Identity:
    case ActKind::ReLU:
    case ActKind::Softplus:
    case ActKind::ShiftedSoftplus:
    case ActKind::Sigmoid: return std::make_shared<Elementwise>(kind, dim);
    default: throw std::invalid_argument("make_elementwise: not an element-wise kind");
  }
}
ActivationPtr make_softmax(Index q, Index batch) { return std::make_shared<Softmax>(q, batch); }
ActivationPtr make_pool(ActKind kind, PatchSet patches, Index batch) {
  if (kind != ActKind::AvgPool && kind != ActKind::MaxPool) throw std::invalid_argument("make_pool: not a pooling kind");
  return std::make_shared<Pool>(kind, std::move(patches), batch);
}
ActivationPtr make_batchnorm(Index delta, Index batch, double eps) {
  return std::make_shared<BatchNorm>(delta, batch, eps);
}
ActivationPtr make_tail_pass(ActivationPtr inner, Index tail) {
  return std::make_shared<TailPass>(std::move(inner), tail);
}

Matrix activation_jacobian_t(const Activation& a, const Vector& z) {
  const Vector out = a.value(z);
  Matrix J(a.in_dim(), a.out_dim());
  Vector e = Vector::Zero(a.out_dim());
  for (Index k = 0; k < a.out_dim(); ++k) {
    e(k) = 1.0;
    J.col(k) = a.vjp(z, out, e, nullptr);
    e(k) = 0.0;
  }
  return J;
}

}  // namespace chainopt
