#include "chainopt/checks.hpp"

#include <cmath>

namespace chainopt {

double rel_error(const Vector& a, const Vector& b) {
  const double s = std::max(a.norm(), b.norm());
  return s == 0.0 ? 0.0 : (a - b).norm() / s;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector y = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double s = h * std::max(1.0, std::abs(x(i)));
    y(i) = x(i) + s;
    const double fp = f(y);
    y(i) = x(i) - s;
    const double fm = f(y);
    y(i) = x(i);
    g(i) = (fp - fm) / (2 * s);
  }
  return g;
}

std::vector<GradCheckRow> gradcheck(const Chain& chain, const Objective& h, const Vector& x0, const Vector& u,
                                    std::mt19937_64& rng, double tol) {
  std::vector<GradCheckRow> rows;
  const Tape tape = forward(chain, x0, u);
  for (Index t = 0; t < chain.tau(); ++t) {
    const Layer& L = chain.layer(t);
    const Vector& x = tape.states()[size_t(t)];
    const Vector ut = chain.block(u, t);
    const Vector lam = random_vector(L.out_dim(), rng);
    const auto [gx, gu] = tape.linearization(t).vjp(lam, nullptr);
    const Vector fx = fd_gradient([&](const Vector& z) { return lam.dot(L.value(z, ut)); }, x);
    rows.push_back({"layer " + std::to_string(t + 1) + " d/dx " + L.describe(), rel_error(gx, fx), false});
    if (ut.size() > 0) {
      const Vector fu = fd_gradient([&](const Vector& z) { return lam.dot(L.value(x, z)); }, ut);
      rows.push_back({"layer " + std::to_string(t + 1) + " d/du " + L.describe(), rel_error(gu, fu), false});
    }
  }
  const Vector g = backward(tape, h.gradient(tape.output())).g;
  const Vector fg = fd_gradient([&](const Vector& z) { return h.value(forward(chain, x0, z).output()); }, u);
  rows.push_back({"end-to-end " + h.name(), rel_error(g, fg), false});
  for (auto& r : rows) r.pass = r.rel_err <= tol;
  return rows;
}

std::unique_ptr<Objective> synthetic_objective(const std::string& kind, Index q, Index n, std::mt19937_64& rng) {
  if (kind == "squared") return make_squared(random_vector(q * n, rng), n);
  if (kind == "logistic") {
    Vector y = Vector::Zero(q * n);
    std::uniform_int_distribution<Index> pick(0, q - 1);
    for (Index i = 0; i < n; ++i) y(i * q + pick(rng)) = 1.0;
    return make_logistic(y, n);
  }
  if (kind == "convex-cluster") return make_convex_cluster(q, n);
  if (kind == "none" || kind == "linear") return make_quadratic(random_vector(q * n, rng), Matrix::Zero(q * n, q * n));
  throw std::invalid_argument("unknown objective '" + kind + "'");
}

Vector synthetic_input(const Chain& chain, Index d0, double norm, std::mt19937_64& rng) {
  Vector x = Vector::Zero(chain.input_dim());
  Vector v = random_vector(d0, rng);
  if (v.norm() > 0) v *= norm / v.norm();
  x.head(d0) = v;
  return x;
}

}  // namespace chainopt
