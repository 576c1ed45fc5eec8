#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chainopt/tensor.hpp"

using namespace chainopt;

namespace {

Tensor3 random_tensor(Index d, Index n, Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Tensor3 t(d, n, p);
  for (Index k = 0; k < p; ++k)
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < n; ++j) t(i, j, k) = g(rng);
  return t;
}

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// M[Vec(A), Vec(B), .] = Vec(AB) for n x n matrices, column-major vectorisation
Tensor3 matmul_tensor(Index n) {
  Tensor3 t(n * n, n * n, n * n);
  for (Index r = 0; r < n; ++r)
    for (Index s = 0; s < n; ++s)
      for (Index c = 0; c < n; ++c) t(r + n * s, s + n * c, r + n * c) = 1.0;
  return t;
}

}  // namespace

TEST(TensorContract, ZeroTensorGivesZero) {
  std::mt19937_64 rng(1);
  Tensor3 z(3, 2, 4);
  const auto out = std::get<Tensor3>(
      tensor_contract(z, Matrix(random_matrix(3, 2, rng)), Matrix(random_matrix(2, 3, rng)),
                      Matrix(random_matrix(4, 2, rng))));
  for (const auto& s : out.slices()) EXPECT_EQ(s.norm(), 0.0);
}

TEST(TensorContract, MatrixProductTensor) {
  std::mt19937_64 rng(2);
  const Matrix A = random_matrix(2, 2, rng), B = random_matrix(2, 2, rng);
  const Matrix AB = A * B;
  const Vector va = Eigen::Map<const Vector>(A.data(), 4), vb = Eigen::Map<const Vector>(B.data(), 4);
  const Vector want = Eigen::Map<const Vector>(AB.data(), 4);
  const Vector got = std::get<Vector>(tensor_contract(matmul_tensor(2), Vector(va), Vector(vb), std::nullopt));
  EXPECT_LE((got - want).norm(), 1e-14);
  EXPECT_LE((contract_xy(matmul_tensor(2), va, vb) - want).norm(), 1e-14);
}

TEST(TensorContract, CompositionLaw) {
  std::mt19937_64 rng(3);
  const Tensor3 t = random_tensor(2, 2, 2, rng);
  const Matrix P = random_matrix(2, 2, rng), Q = random_matrix(2, 2, rng), R = random_matrix(2, 2, rng);
  const Matrix S = random_matrix(2, 2, rng), T = random_matrix(2, 2, rng), U = random_matrix(2, 2, rng);
  const auto once = std::get<Tensor3>(tensor_contract(t, P, Q, R));
  const auto twice = std::get<Tensor3>(tensor_contract(once, S, T, U));
  const auto direct = std::get<Tensor3>(tensor_contract(t, Matrix(P * S), Matrix(Q * T), Matrix(R * U)));
  for (Index k = 0; k < 2; ++k) EXPECT_LE((twice.slice(k) - direct.slice(k)).norm(), 1e-12);
}

TEST(TensorContract, HolesAreIdentity) {
  std::mt19937_64 rng(4);
  const Tensor3 t = random_tensor(3, 4, 2, rng);
  const auto out = std::get<Tensor3>(tensor_contract(t, std::nullopt, std::nullopt, std::nullopt));
  for (Index k = 0; k < 2; ++k) EXPECT_EQ(out.slice(k), t.slice(k));
}

TEST(TensorContract, VectorSlotsMatchHelpers) {
  std::mt19937_64 rng(5);
  const Tensor3 t = random_tensor(3, 4, 5, rng);
  const Vector x = random_matrix(3, 1, rng), y = random_matrix(4, 1, rng), z = random_matrix(5, 1, rng);
  EXPECT_NEAR(std::get<double>(tensor_contract(t, x, y, z)), contract_xyz(t, x, y, z), 1e-12);
  EXPECT_LE((std::get<Vector>(tensor_contract(t, x, std::nullopt, z)) - contract_xz(t, x, z)).norm(), 1e-12);
  EXPECT_LE((std::get<Vector>(tensor_contract(t, std::nullopt, y, z)) - contract_yz(t, y, z)).norm(), 1e-12);
  EXPECT_LE((std::get<Matrix>(tensor_contract(t, std::nullopt, std::nullopt, z)) - contract_z(t, z)).norm(), 1e-12);
}

TEST(TensorContract, ShapeMismatchThrows) {
  Tensor3 t(3, 2, 2);
  EXPECT_THROW(tensor_contract(t, Matrix(Matrix::Zero(2, 2)), std::nullopt, std::nullopt), DimensionError);
  EXPECT_THROW(tensor_contract(t, Vector(Vector::Zero(4)), std::nullopt, std::nullopt), DimensionError);
}

TEST(OperatorNorm, SimpleCases) {
  EXPECT_NEAR(operator_norm(Matrix::Identity(3, 3)), 1.0, 1e-12);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3;
  d(1, 1) = -4;
  EXPECT_NEAR(operator_norm(d), 4.0, 1e-12);
}

TEST(OperatorNorm, MatchesJacobiSvd) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const Matrix m = random_matrix(5, 4, rng);
    const double want = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
    EXPECT_NEAR(operator_norm(m), want, 1e-8 * want);
  }
}

TEST(OperatorNorm, Submultiplicative) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Matrix a = random_matrix(4, 3, rng), b = random_matrix(3, 5, rng);
    EXPECT_LE(operator_norm(a * b), operator_norm(a) * operator_norm(b) * (1 + 1e-12));
  }
}

TEST(TensorNorm, SingleSliceIsOperatorNorm) {
  std::mt19937_64 rng(8);
  const Tensor3 t = random_tensor(4, 3, 1, rng);
  const auto n = tensor_norm_222(t);
  EXPECT_TRUE(n.certified);
  EXPECT_NEAR(n.value, operator_norm(t.slice(0)), 1e-10);
}

TEST(TensorNorm, RankOne) {
  Vector e = Vector::Zero(3);
  e(0) = 1;
  EXPECT_NEAR(tensor_norm_222(Tensor3::outer(e, e, e)).value, 1.0, 1e-12);
}

TEST(TensorNorm, MatchesSphereGrid) {
  std::mt19937_64 rng(9);
  const Tensor3 t = random_tensor(3, 3, 3, rng);
  // for fixed x the best (y, z) is the top singular value of A[x, ., .]
  double brute = 0.0;
  const int nt = 400, np = 200;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b <= np; ++b) {
      const double th = 2 * M_PI * a / nt, ph = M_PI * b / np;
      Vector x(3);
      x << std::sin(ph) * std::cos(th), std::sin(ph) * std::sin(th), std::cos(ph);
      Matrix m(3, 3);
      for (Index k = 0; k < 3; ++k) m.col(k) = t.slice(k).transpose() * x;
      brute = std::max(brute, Eigen::JacobiSVD<Matrix>(m).singularValues()(0));
    }
  const auto n = tensor_norm_222(t);
  EXPECT_FALSE(n.certified);
  EXPECT_NEAR(n.value, brute, 1e-3 * brute);
}

TEST(TensorNorm, InvariantUnderTranspose) {
  std::mt19937_64 rng(10);
  const Tensor3 t = random_tensor(3, 4, 3, rng);
  EXPECT_NEAR(tensor_norm_222(t).value, tensor_norm_222(t.transposed12()).value, 1e-8);
}
