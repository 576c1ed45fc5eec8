#include "chainopt/biaffine.hpp"

#include "chainopt/kernels.hpp"

namespace chainopt {

Vector BiAffineForm::eval(const Vector& x, const Vector& u) const {
  Vector o = b0 + Bu * u + Bx * x;
  if (beta.p() > 0) o += contract_xy(beta, x, u);
  return o;
}

BiAffineForm BiAffine::dense() const {
  const Index d = in_dim(), p = param_dim(), e = out_dim();
  BiAffineForm f;
  const Vector zx = Vector::Zero(d), zu = Vector::Zero(p);
  f.b0 = value(zx, zu);
  f.Bx.resize(e, d);
  f.Bu.resize(e, p);
  Vector ex = Vector::Zero(d), eu = Vector::Zero(p);
  for (Index i = 0; i < d; ++i) {
    ex(i) = 1;
    f.Bx.col(i) = value(ex, zu) - f.b0;
    ex(i) = 0;
  }
  for (Index j = 0; j < p; ++j) {
    eu(j) = 1;
    f.Bu.col(j) = value(zx, eu) - f.b0;
    eu(j) = 0;
  }
  f.beta = Tensor3(d, p, e);
  Vector lam = Vector::Zero(e);
  for (Index k = 0; k < e; ++k) {
    lam(k) = 1;
    f.beta.slice(k) = bilinear_contract(lam);
    lam(k) = 0;
  }
  return f;
}

namespace {

class FullyConnected final : public BiAffine {
 public:
  FullyConnected(Index d, Index e, Index m) : d_(d), e_(e), m_(m) {}
  std::string name() const override { return "fc"; }
  Index in_dim() const override { return d_ * m_; }
  Index out_dim() const override { return e_ * m_; }
  Index param_dim() const override { return d_ * e_ + e_; }

  Vector value(const Vector& x, const Vector& u) const override {
    Vector o(e_ * m_);
    const double* W = u.data();
    for (Index s = 0; s < m_; ++s)
      for (Index j = 0; j < e_; ++j) o(s * e_ + j) = kernels::dot(W + j * d_, x.data() + s * d_, d_) + u(d_ * e_ + j);
    return o;
  }
  Vector vjp_x(const Vector&, const Vector& u, const Vector& lam, std::uint64_t* units) const override {
    Vector g = Vector::Zero(d_ * m_);
    for (Index s = 0; s < m_; ++s)
      for (Index j = 0; j < e_; ++j) kernels::axpy(lam(s * e_ + j), u.data() + j * d_, g.data() + s * d_, d_);
    if (units) *units += std::uint64_t(m_) * d_ * e_;
    return g;
  }
  Vector vjp_u(const Vector& x, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    Vector g = Vector::Zero(param_dim());
    for (Index s = 0; s < m_; ++s)
      for (Index j = 0; j < e_; ++j) {
        kernels::axpy(lam(s * e_ + j), x.data() + s * d_, g.data() + j * d_, d_);
        g(d_ * e_ + j) += lam(s * e_ + j);
      }
    if (units) *units += std::uint64_t(m_) * d_ * e_ + std::uint64_t(m_) * e_;
    return g;
  }
  Vector jvp(const Vector& x, const Vector& u, const Vector& dx, const Vector& du) const override {
    Vector o(e_ * m_);
    for (Index s = 0; s < m_; ++s)
      for (Index j = 0; j < e_; ++j)
        o(s * e_ + j) = kernels::dot(u.data() + j * d_, dx.data() + s * d_, d_) +
                        kernels::dot(du.data() + j * d_, x.data() + s * d_, d_) + du(d_ * e_ + j);
    return o;
  }
  Matrix bilinear_contract(const Vector& lam) const override {
    Matrix M = Matrix::Zero(in_dim(), param_dim());
    for (Index s = 0; s < m_; ++s)
      for (Index r = 0; r < d_; ++r)
        for (Index j = 0; j < e_; ++j) M(s * d_ + r, j * d_ + r) += lam(s * e_ + j);
    return M;
  }
  BiAffineSparsity sparsity() const override {
    return {std::uint64_t(m_) * e_ * d_, std::uint64_t(m_) * e_, 0};
  }

 private:
  Index d_, e_, m_;
};

class Conv final : public BiAffine {
 public:
  Conv(PatchSet p, Index nf, Index m) : p_(std::move(p)), nf_(nf), m_(m) {
    for (auto i : p_.idx) taps_ += i >= 0;
  }
  std::string name() const override { return "conv"; }
  Index in_dim() const override { return p_.in_dim * m_; }
  Index out_dim() const override { return p_.count() * nf_ * m_; }
  Index param_dim() const override { return p_.patch_size * nf_ + nf_; }

  void gather(const Vector& x, Index s, Index k, double* buf) const {
    const auto* pk = p_.patch(k);
    const Index off = s * p_.in_dim;
    for (Index j = 0; j < p_.patch_size; ++j) buf[j] = pk[j] >= 0 ? x(off + pk[j]) : 0.0;
  }
  void scatter(Vector& g, Index s, Index k, const double* buf) const {
    const auto* pk = p_.patch(k);
    const Index off = s * p_.in_dim;
    for (Index j = 0; j < p_.patch_size; ++j)
      if (pk[j] >= 0) g(off + pk[j]) += buf[j];
  }

  Vector value(const Vector& x, const Vector& u) const override {
    const Index np = p_.count(), sf = p_.patch_size;
    Vector o(out_dim());
    std::vector<double> buf(sf);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        gather(x, s, k, buf.data());
        for (Index f = 0; f < nf_; ++f)
          o(s * np * nf_ + k + np * f) = kernels::dot(u.data() + f * sf, buf.data(), sf) + u(sf * nf_ + f);
      }
    return o;
  }
  Vector vjp_x(const Vector&, const Vector& u, const Vector& lam, std::uint64_t* units) const override {
    const Index np = p_.count(), sf = p_.patch_size;
    Vector g = Vector::Zero(in_dim());
    std::vector<double> buf(sf);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        std::fill(buf.begin(), buf.end(), 0.0);
        for (Index f = 0; f < nf_; ++f) kernels::axpy(lam(s * np * nf_ + k + np * f), u.data() + f * sf, buf.data(), sf);
        scatter(g, s, k, buf.data());
      }
    if (units) *units += std::uint64_t(m_) * nf_ * taps_;
    return g;
  }
  Vector vjp_u(const Vector& x, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    const Index np = p_.count(), sf = p_.patch_size;
    Vector g = Vector::Zero(param_dim());
    std::vector<double> buf(sf);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        gather(x, s, k, buf.data());
        for (Index f = 0; f < nf_; ++f) {
          const double l = lam(s * np * nf_ + k + np * f);
          kernels::axpy(l, buf.data(), g.data() + f * sf, sf);
          g(sf * nf_ + f) += l;
        }
      }
    if (units) *units += std::uint64_t(m_) * nf_ * taps_ + std::uint64_t(m_) * np * nf_;
    return g;
  }
  Vector jvp(const Vector& x, const Vector& u, const Vector& dx, const Vector& du) const override {
    const Index np = p_.count(), sf = p_.patch_size;
    Vector o(out_dim());
    std::vector<double> bx(sf), bd(sf);
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        gather(x, s, k, bx.data());
        gather(dx, s, k, bd.data());
        for (Index f = 0; f < nf_; ++f)
          o(s * np * nf_ + k + np * f) = kernels::dot(u.data() + f * sf, bd.data(), sf) +
                                        kernels::dot(du.data() + f * sf, bx.data(), sf) + du(sf * nf_ + f);
      }
    return o;
  }
  Matrix bilinear_contract(const Vector& lam) const override {
    const Index np = p_.count(), sf = p_.patch_size;
    Matrix M = Matrix::Zero(in_dim(), param_dim());
    for (Index s = 0; s < m_; ++s)
      for (Index k = 0; k < np; ++k) {
        const auto* pk = p_.patch(k);
        for (Index f = 0; f < nf_; ++f)
          for (Index j = 0; j < sf; ++j)
            if (pk[j] >= 0) M(s * p_.in_dim + pk[j], f * sf + j) += lam(s * np * nf_ + k + np * f);
      }
    return M;
  }
  BiAffineSparsity sparsity() const override {
    const std::uint64_t np = p_.count();
    // padding taps are structural zeros
    return {std::uint64_t(m_) * nf_ * taps_, std::uint64_t(m_) * np * nf_, 0};
  }

 private:
  PatchSet p_;
  Index nf_, m_;
  std::uint64_t taps_ = 0;
};

class PassThrough final : public BiAffine {
 public:
  explicit PassThrough(Index d) : d_(d) {}
  std::string name() const override { return "pass"; }
  Index in_dim() const override { return d_; }
  Index out_dim() const override { return d_; }
  Index param_dim() const override { return 0; }
  Vector value(const Vector& x, const Vector&) const override { return x; }
  Vector vjp_x(const Vector&, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    if (units) *units += d_;
    return lam;
  }
  Vector vjp_u(const Vector&, const Vector&, const Vector&, std::uint64_t*) const override { return Vector(0); }
  Vector jvp(const Vector&, const Vector&, const Vector& dx, const Vector&) const override { return dx; }
  Matrix bilinear_contract(const Vector&) const override { return Matrix::Zero(d_, 0); }
  BiAffineSparsity sparsity() const override { return {0, 0, std::uint64_t(d_)}; }

 private:
  Index d_;
};

class Dense final : public BiAffine {
 public:
  explicit Dense(BiAffineForm f) : f_(std::move(f)) {
    const Index d = f_.in_dim(), p = f_.param_dim(), e = f_.out_dim();
    if (f_.Bu.rows() != e || f_.Bx.rows() != e) throw DimensionError("dense bi-affine: output dims differ");
    if (f_.beta.p() != 0 && (f_.beta.p() != e || f_.beta.d() != d || f_.beta.n() != p))
      throw DimensionError("dense bi-affine: tensor shape");
    if (f_.beta.p() == 0) f_.beta = Tensor3(d, p, e);
  }
  std::string name() const override { return "dense"; }
  Index in_dim() const override { return f_.in_dim(); }
  Index out_dim() const override { return f_.out_dim(); }
  Index param_dim() const override { return f_.param_dim(); }
  Vector value(const Vector& x, const Vector& u) const override { return f_.eval(x, u); }
  Vector vjp_x(const Vector&, const Vector& u, const Vector& lam, std::uint64_t* units) const override {
    if (units) *units += nnz_beta_ + nnz_x();
    return contract_yz(f_.beta, u, lam) + f_.Bx.transpose() * lam;
  }
  Vector vjp_u(const Vector& x, const Vector&, const Vector& lam, std::uint64_t* units) const override {
    if (units) *units += nnz_beta_ + nnz_u();
    return contract_xz(f_.beta, x, lam) + f_.Bu.transpose() * lam;
  }
  Vector jvp(const Vector& x, const Vector& u, const Vector& dx, const Vector& du) const override {
    return contract_xy(f_.beta, dx, u) + contract_xy(f_.beta, x, du) + f_.Bx * dx + f_.Bu * du;
  }
  Matrix bilinear_contract(const Vector& lam) const override { return contract_z(f_.beta, lam); }
  BiAffineSparsity sparsity() const override { return {nnz_beta_, nnz_u(), nnz_x()}; }
  BiAffineForm dense() const override { return f_; }

 private:
  std::uint64_t nnz_u() const { return std::uint64_t((f_.Bu.array() != 0.0).count()); }
  std::uint64_t nnz_x() const { return std::uint64_t((f_.Bx.array() != 0.0).count()); }
  BiAffineForm f_;
  std::uint64_t nnz_beta_ = [this] {
    std::uint64_t n = 0;
    for (const auto& s : f_.beta.slices()) n += std::uint64_t((s.array() != 0.0).count());
    return n;
  }();
};

class ResidualBiAffine final : public BiAffine {
 public:
  explicit ResidualBiAffine(BiAffinePtr b) : b_(std::move(b)) {}
  std::string name() const override { return b_->name() + "+res"; }
  Index d() const { return b_->in_dim(); }
  Index e() const { return b_->out_dim(); }
  Index in_dim() const override { return d() + e(); }
  Index out_dim() const override { return e() + d(); }
  Index param_dim() const override { return b_->param_dim(); }
  Vector value(const Vector& x, const Vector& u) const override {
    Vector o(out_dim());
    o << b_->value(x.head(d()), u) + x.tail(e()), x.head(d());
    return o;
  }
  Vector vjp_x(const Vector& x, const Vector& u, const Vector& lam, std::uint64_t* units) const override {
    Vector g(in_dim());
    g << b_->vjp_x(x.head(d()), u, lam.head(e()), units) + lam.tail(d()), lam.head(e());
    if (units) *units += d() + e();
    return g;
  }
  Vector vjp_u(const Vector& x, const Vector& u, const Vector& lam, std::uint64_t* units) const override {
    return b_->vjp_u(x.head(d()), u, lam.head(e()), units);
  }
  Vector jvp(const Vector& x, const Vector& u, const Vector& dx, const Vector& du) const override {
    Vector o(out_dim());
    o << b_->jvp(x.head(d()), u, dx.head(d()), du) + dx.tail(e()), dx.head(d());
    return o;
  }
  Matrix bilinear_contract(const Vector& lam) const override {
    Matrix M = Matrix::Zero(in_dim(), param_dim());
    M.topRows(d()) = b_->bilinear_contract(lam.head(e()));
    return M;
  }
  BiAffineSparsity sparsity() const override {
    auto s = b_->sparsity();
    s.beta_x += std::uint64_t(d() + e());
    return s;
  }

 private:
  BiAffinePtr b_;
};

}  // namespace

BiAffinePtr make_fully_connected(Index delta, Index delta_out, Index batch) {
  return std::make_shared<FullyConnected>(delta, delta_out, batch);
}
BiAffinePtr make_conv(PatchSet patches, Index filters, Index batch) {
  return std::make_shared<Conv>(std::move(patches), filters, batch);
}
BiAffinePtr make_pass_through(Index dim) { return std::make_shared<PassThrough>(dim); }
BiAffinePtr make_dense(BiAffineForm form) { return std::make_shared<Dense>(std::move(form)); }
BiAffinePtr make_residual_biaffine(BiAffinePtr inner) { return std::make_shared<ResidualBiAffine>(std::move(inner)); }

}  // namespace chainopt
