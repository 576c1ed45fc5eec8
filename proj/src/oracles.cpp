#include "chainopt/oracles.hpp"

#include <cmath>

namespace chainopt {

Index LQProblem::total_params() const {
  Index n = 0;
  for (const auto& b : B) n += b.cols();
  return n;
}

Index LQProblem::total_states() const {
  Index n = A.empty() ? 0 : A[0].cols();
  for (const auto& a : A) n += a.rows();
  return n;
}

void LQProblem::validate() const {
  const Index T = tau();
  if (T < 1) throw DimensionError("LQ problem needs tau >= 1");
  if (Index(B.size()) != T || Index(P.size()) != T || Index(p.size()) != T || Index(Q.size()) != T ||
      Index(q.size()) != T || Index(R.size()) != T)
    throw DimensionError("LQ problem: per-stage lists differ in length");
  for (Index t = 1; t <= T; ++t) {
    const Index d = state_dim(t), dp = state_dim(t - 1), pt = B[t - 1].cols();
    const auto bad = [&](const char* what) {
      throw DimensionError(std::string("LQ problem stage ") + std::to_string(t) + ": " + what);
    };
    if (t > 1 && A[t - 1].cols() != A[t - 2].rows()) bad("A chain");
    if (B[t - 1].rows() != d) bad("B rows");
    if (P[t - 1].rows() != d || P[t - 1].cols() != d) bad("P shape");
    if (p[t - 1].size() != d) bad("p length");
    if (Q[t - 1].rows() != pt || Q[t - 1].cols() != pt) bad("Q shape");
    if (q[t - 1].size() != pt) bad("q length");
    if (R[t - 1].rows() != dp || R[t - 1].cols() != pt) bad("R shape");
  }
}

LQProblem build_lq(const Tape& tape, const Objective& h, const Regularizer& r, OracleKind kind, double kappa) {
  if (!(kappa > 0)) throw std::invalid_argument("build_lq: kappa must be positive");
  const Chain& chain = tape.chain();
  const Index T = chain.tau();
  const Vector& u = tape.params();
  const Vector& y = tape.output();
  LQProblem lq;
  lq.kappa = kappa;
  const Vector gr = r.gradient(u);
  std::vector<Vector> lam(T + 1);
  if (kind == OracleKind::Newton) {
    for (Index t = 0; t < T; ++t)
      if (!chain.layer(t).twice_differentiable())
        throw SecondOrderUnavailable("newton oracle: layer " + std::to_string(t + 1) + " (" +
                                     chain.layer(t).describe() + ") is not twice differentiable");
    lam[T] = h.gradient(y);
    for (Index t = T; t >= 1; --t) lam[t - 1] = tape.linearization(t - 1).vjp(lam[t], nullptr).first;
  }
  for (Index t = 1; t <= T; ++t) {
    const auto& lin = tape.linearization(t - 1);
    const Index dout = chain.layer(t - 1).out_dim(), din = chain.layer(t - 1).in_dim(), pt = chain.param_dim(t - 1);
    Matrix Jx(din, dout), Ju(pt, dout);
    Vector e = Vector::Zero(dout);
    for (Index k = 0; k < dout; ++k) {
      e(k) = 1;
      auto [gx, gu] = lin.vjp(e, nullptr);
      Jx.col(k) = gx;
      Ju.col(k) = gu;
      e(k) = 0;
    }
    lq.A.push_back(Jx.transpose());
    lq.B.push_back(Ju.transpose());
    lq.P.push_back(Matrix::Zero(dout, dout));
    lq.p.push_back(Vector::Zero(dout));
    lq.q.push_back(gr.segment(chain.param_offset(t - 1), pt));
    lq.Q.push_back(kind == OracleKind::Gradient
                       ? Matrix::Zero(pt, pt)
                       : r.hessian_block(u, chain.param_offset(t - 1), pt));
    lq.R.push_back(Matrix::Zero(din, pt));
  }
  lq.p[T - 1] = h.gradient(y);
  if (kind != OracleKind::Gradient) lq.P[T - 1] = h.hessian(y);
  if (kind == OracleKind::Newton) {
    for (Index t = 1; t <= T; ++t) {
      const SecondOrder so = chain.layer(t - 1).second_contract(tape.states()[t - 1], chain.block(u, t - 1), lam[t]);
      if (t >= 2) lq.P[t - 2] += so.xx;  // P_{t-1}; P_0 multiplies y_0 = 0
      lq.R[t - 1] = so.xu;
      lq.Q[t - 1] += so.uu;
    }
  }
  return lq;
}

double lq_value(const LQProblem& lq, const Vector& v) {
  Vector y = Vector::Zero(lq.state_dim(0));
  Index off = 0;
  double val = 0.0;
  for (Index t = 1; t <= lq.tau(); ++t) {
    const Index pt = lq.param_dim(t);
    const Vector vt = v.segment(off, pt);
    off += pt;
    const Vector yn = lq.A[t - 1] * y + lq.B[t - 1] * vt;
    val += 0.5 * yn.dot(lq.P[t - 1] * yn) + lq.p[t - 1].dot(yn) + y.dot(lq.R[t - 1] * vt) +
           0.5 * vt.dot(lq.Q[t - 1] * vt) + lq.q[t - 1].dot(vt) + 0.5 * lq.kappa * vt.squaredNorm();
    y = yn;
  }
  return val;
}

OracleStep solve_gradient_step(const LQProblem& lq, double gamma) {
  lq.validate();
  OracleStep s;
  s.kappa = gamma > 0 ? 1.0 / gamma : 0.0;
  s.v.resize(lq.total_params());
  Vector lam = lq.p[lq.tau() - 1];
  Index off = lq.total_params();
  for (Index t = lq.tau(); t >= 1; --t) {
    const Index pt = lq.param_dim(t);
    off -= pt;
    s.v.segment(off, pt) = -gamma * (lq.q[t - 1] + lq.B[t - 1].transpose() * lam);
    lam = lq.A[t - 1].transpose() * lam;
    if (t >= 2) lam += lq.p[t - 2];
  }
  return s;
}

namespace {

// Cholesky with an explicit pivot threshold; false when not positive definite.
bool spd_factor(const Matrix& M, Eigen::LLT<Matrix>& llt) {
  if (M.rows() == 0) return true;
  llt.compute(0.5 * (M + M.transpose()));
  if (llt.info() != Eigen::Success) return false;
  const Matrix& L = llt.matrixLLT();
  for (Index i = 0; i < L.rows(); ++i)
    if (!(L(i, i) * L(i, i) > 1e-12)) return false;
  return true;
}

}  // namespace

OracleStep solve_newton_dp(const LQProblem& lq, int max_doublings) {
  lq.validate();
  if (!(lq.kappa > 0)) throw std::invalid_argument("newton dp: kappa must be positive");
  const Index T = lq.tau();
  OracleStep s;
  double kappa = lq.kappa;
  std::vector<Matrix> K(T);
  std::vector<Vector> k(T);
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    Matrix C = lq.P[T - 1];
    Vector c = lq.p[T - 1];
    bool ok = true;
    for (Index t = T; t >= 1; --t) {
      const Matrix& A = lq.A[t - 1];
      const Matrix& B = lq.B[t - 1];
      const Index pt = B.cols();
      Matrix M = lq.Q[t - 1] + B.transpose() * C * B;
      M.diagonal().array() += kappa;
      Eigen::LLT<Matrix> llt;
      if (!spd_factor(M, llt)) {
        ok = false;
        break;
      }
      const Matrix G = lq.R[t - 1] + A.transpose() * C * B;  // d_{t-1} x p_t
      const Vector gq = lq.q[t - 1] + B.transpose() * c;
      if (pt > 0) {
        K[t - 1] = -llt.solve(Matrix(G.transpose()));
        k[t - 1] = -llt.solve(gq);
      } else {
        K[t - 1] = Matrix::Zero(0, A.cols());
        k[t - 1] = Vector::Zero(0);
      }
      Matrix Cn = A.transpose() * C * A + G * K[t - 1];
      Vector cn = A.transpose() * c + G * k[t - 1];
      if (t >= 2) {
        Cn += lq.P[t - 2];
        cn += lq.p[t - 2];
      }
      C = 0.5 * (Cn + Cn.transpose());
      c = cn;
    }
    if (ok) {
      s.kappa = kappa;
      s.retries = attempt;
      s.v.resize(lq.total_params());
      Vector y = Vector::Zero(lq.state_dim(0));
      Index off = 0;
      for (Index t = 1; t <= T; ++t) {
        const Vector vt = K[t - 1] * y + k[t - 1];
        s.v.segment(off, vt.size()) = vt;
        off += vt.size();
        y = lq.A[t - 1] * y + lq.B[t - 1] * vt;
      }
      return s;
    }
    kappa *= 2.0;
  }
  throw InfeasibleModel("newton dp: model still not strongly convex after " + std::to_string(max_doublings) +
                        " doublings of kappa");
}

OracleStep solve_dense_reference(const LQProblem& lq, Index cap) {
  lq.validate();
  const Index np = lq.total_params();
  if (np + lq.total_states() > cap) throw std::length_error("dense reference: problem larger than cap");
  const Index T = lq.tau();
  Matrix H = Matrix::Zero(np, np);
  Vector g = Vector::Zero(np);
  Matrix Gprev = Matrix::Zero(lq.state_dim(0), np);  // y_{t-1} = Gprev v
  Index off = 0;
  for (Index t = 1; t <= T; ++t) {
    const Index pt = lq.param_dim(t);
    Matrix G = lq.A[t - 1] * Gprev;
    G.middleCols(off, pt) += lq.B[t - 1];
    H += G.transpose() * lq.P[t - 1] * G;
    g += G.transpose() * lq.p[t - 1];
    const Matrix cross = Gprev.transpose() * lq.R[t - 1];  // np x pt
    H.middleCols(off, pt) += cross;
    H.middleRows(off, pt) += cross.transpose();
    H.block(off, off, pt, pt) += lq.Q[t - 1];
    g.segment(off, pt) += lq.q[t - 1];
    Gprev = std::move(G);
    off += pt;
  }
  H.diagonal().array() += lq.kappa;
  Eigen::LLT<Matrix> llt;
  if (!spd_factor(H, llt)) throw InfeasibleModel("dense reference: quadratic model is not strongly convex");
  OracleStep s;
  s.kappa = lq.kappa;
  s.v = np > 0 ? Vector(-llt.solve(g)) : Vector(0);
  return s;
}

namespace {

struct GnData {
  Vector gh;
  Matrix P;
  Vector q;
  std::vector<Matrix> Mb;  // kappa I + hess r_t per layer
  std::vector<Eigen::LLT<Matrix>> Mllt;
  std::vector<Index> off;

  Vector Minv(const Vector& v) const {
    Vector out(v.size());
    for (size_t t = 0; t < Mb.size(); ++t) {
      const Index len = Mb[t].rows();
      if (len > 0) out.segment(off[t], len) = Mllt[t].solve(v.segment(off[t], len));
    }
    return out;
  }
  double quad(const Vector& v) const {
    double s = 0.0;
    for (size_t t = 0; t < Mb.size(); ++t) {
      const Index len = Mb[t].rows();
      s += v.segment(off[t], len).dot(Mb[t] * v.segment(off[t], len));
    }
    return s;
  }
};

GnData gn_data(const Tape& tape, const Objective& h, const Regularizer& r, double kappa) {
  if (!(kappa > 0)) throw std::invalid_argument("gauss-newton: kappa must be positive");
  GnData d;
  const Vector& y = tape.output();
  d.gh = h.gradient(y);
  if (!h.has_hessian()) throw InfeasibleModel("gauss-newton: objective " + h.name() + " has no quadratic model");
  d.P = h.hessian(y);
  d.P = 0.5 * (d.P + d.P.transpose());
  const Vector& u = tape.params();
  d.q = r.gradient(u);
  const Chain& chain = tape.chain();
  for (Index t = 0; t < chain.tau(); ++t) {
    const Index off = chain.param_offset(t), len = chain.param_dim(t);
    Matrix M = r.hessian_block(u, off, len);
    M.diagonal().array() += kappa;
    Eigen::LLT<Matrix> llt;
    if (!spd_factor(M, llt))
      throw InfeasibleModel("gauss-newton: regulariser model plus kappa is not positive definite at layer " +
                            std::to_string(t + 1));
    d.Mb.push_back(std::move(M));
    d.Mllt.push_back(std::move(llt));
    d.off.push_back(off);
  }
  return d;
}

}  // namespace

OracleStep solve_gauss_newton_dual(const Tape& tape, const Objective& h, const Regularizer& r, double kappa) {
  GnData d = gn_data(tape, h, r, kappa);
  const Index dt = d.gh.size();
  Eigen::SelfAdjointEigenSolver<Matrix> es(d.P);
  const Vector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-10 * scale)
    throw InfeasibleModel("gauss-newton: quadratic model of " + h.name() +
                          " is not convex (negative curvature), the dual is unbounded");
  const std::uint64_t calls0 = tape.calls();
  OracleStep s;
  s.kappa = kappa;
  auto Minv = [&](const Vector& v) { return d.Minv(v); };
  Index rank = 0;
  for (Index i = 0; i < dt; ++i)
    if (ev(i) > 1e-12 * scale) ++rank;

  // Conjugate gradient on a symmetric positive definite system given by matvec(pdir, &Jp).
  auto cg = [&](auto&& matvec, const Vector& b, Index max_it, Vector& Jacc, const auto& jmap) {
    Vector x = Vector::Zero(b.size());
    Vector res = b, dir = b;
    const double stop = 1e-10 * (1.0 + b.norm());
    double rr = res.squaredNorm();
    int it = 0;
    while (it < max_it && std::sqrt(rr) > stop) {
      Vector Jdir;
      const Vector Ad = matvec(dir, Jdir);
      const double alpha = rr / dir.dot(Ad);
      x += alpha * dir;
      Jacc += alpha * jmap(Jdir);
      res -= alpha * Ad;
      const double rn = res.squaredNorm();
      dir = res + (rn / rr) * dir;
      rr = rn;
      ++it;
    }
    s.cg_iterations = it;
    return x;
  };

  Vector Jmu = Vector::Zero(tape.params().size());
  auto identity_map = [](const Vector& v) { return v; };
  if (rank == dt) {
    // (P^{-1} + J^T M^{-1} J) mu = P^{-1} grad h - J^T M^{-1} q
    Eigen::LLT<Matrix> Pllt(d.P);
    Vector b = Pllt.solve(d.gh);
    if (d.q.norm() > 0) b -= forward_tangent(tape, Minv(d.q));
    auto matvec = [&](const Vector& dir, Vector& Jdir) {
      Jdir = backward(tape, dir).g;
      return Vector(Pllt.solve(dir) + forward_tangent(tape, Minv(Jdir)));
    };
    s.mu = cg(matvec, b, dt, Jmu, identity_map);
  } else {
    // mu = grad h + L w with L = V_r diag(sqrt(ev_r)); (I + L^T J^T M^{-1} J L) w = -L^T J^T M^{-1} (J grad h + q)
    Matrix L(dt, rank);
    Index c = 0;
    for (Index i = 0; i < dt; ++i)
      if (ev(i) > 1e-12 * scale) L.col(c++) = es.eigenvectors().col(i) * std::sqrt(ev(i));
    Jmu = backward(tape, d.gh).g;
    Vector w;
    if (rank > 0) {
      const Vector b = -L.transpose() * forward_tangent(tape, Minv(Jmu + d.q));
      auto matvec = [&](const Vector& dir, Vector& Jdir) {
        Jdir = backward(tape, L * dir).g;
        return Vector(dir + L.transpose() * forward_tangent(tape, Minv(Jdir)));
      };
      w = cg(matvec, b, rank, Jmu, identity_map);
    } else {
      w = Vector(0);
    }
    s.mu = d.gh + L * w;
  }
  s.v = -Minv(Jmu + d.q);
  s.autodiff_calls = tape.calls() - calls0;
  return s;
}

double gauss_newton_primal(const Tape& tape, const Objective& h, const Regularizer& r, double kappa, const Vector& v) {
  GnData d = gn_data(tape, h, r, kappa);
  const Vector y = forward_tangent(tape, v);
  return d.gh.dot(y) + 0.5 * y.dot(d.P * y) + d.q.dot(v) + 0.5 * d.quad(v);
}

double gauss_newton_dual_value(const Tape& tape, const Objective& h, const Regularizer& r, double kappa,
                               const Vector& mu) {
  GnData d = gn_data(tape, h, r, kappa);
  const Vector diff = mu - d.gh;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(d.P);
  const Vector w = cod.solve(diff);
  const double scale = 1.0 + diff.norm();
  if ((d.P * w - diff).norm() > 1e-8 * scale) return -std::numeric_limits<double>::infinity();
  const double hstar = 0.5 * diff.dot(w);
  const Vector s = backward(tape, mu).g + d.q;  // -(-J mu - q)
  const double gstar = 0.5 * s.dot(d.Minv(s));
  return -(hstar + gstar);
}

}  // namespace chainopt
