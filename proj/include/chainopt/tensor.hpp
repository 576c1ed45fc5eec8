#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace chainopt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Order-3 tensor stored as p slices of shape d x n. A[x, y, z] = sum_k z_k x^T A_k y.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(Index d, Index n, Index p);
  explicit Tensor3(std::vector<Matrix> slices);

  Index d() const { return d_; }
  Index n() const { return n_; }
  Index p() const { return static_cast<Index>(slices_.size()); }

  Matrix& slice(Index k) { return slices_[k]; }
  const Matrix& slice(Index k) const { return slices_[k]; }
  const std::vector<Matrix>& slices() const { return slices_; }

  double operator()(Index i, Index j, Index k) const { return slices_[k](i, j); }
  double& operator()(Index i, Index j, Index k) { return slices_[k](i, j); }

  // Swap the first two axes (A_k -> A_k^T).
  Tensor3 transposed12() const;

  static Tensor3 outer(const Vector& a, const Vector& b, const Vector& c);

 private:
  Index d_ = 0, n_ = 0;
  std::vector<Matrix> slices_;
};

// A slot of a contraction: a matrix, a vector (flattened slot), or a hole (identity).
using Slot = std::optional<std::variant<Matrix, Vector>>;
using Contracted = std::variant<double, Vector, Matrix, Tensor3>;

// A[P, Q, R] with A_k' = sum_k R_{k,k'} P^T A_k Q. Vector slots are squeezed
// out of the result following the flat-tensor conventions; the remaining
// free axes keep their order (d, n, p).
Contracted tensor_contract(const Tensor3& t, const Slot& p, const Slot& q, const Slot& r);

// Convenience: A[x, y, .], A[x, ., z], A[., y, z], A[., ., z].
Vector contract_xy(const Tensor3& t, const Vector& x, const Vector& y);
Vector contract_xz(const Tensor3& t, const Vector& x, const Vector& z);
Vector contract_yz(const Tensor3& t, const Vector& y, const Vector& z);
Matrix contract_z(const Tensor3& t, const Vector& z);
double contract_xyz(const Tensor3& t, const Vector& x, const Vector& y, const Vector& z);

// Largest singular value by power iteration on A^T A, falling back to a dense
// symmetric eigensolve when the iteration has not settled.
double operator_norm(const Matrix& m);

struct TensorNorm {
  double value = 0.0;
  bool certified = false;  // exact when one of the three dimensions is 1
};

// Best value of A[x, y, z] / (|x| |y| |z|) found by alternating maximisation
// from `restarts` random unit starts; a lower bound unless certified.
TensorNorm tensor_norm_222(const Tensor3& t, int restarts = 100, double tol = 1e-12,
                           std::uint64_t seed = 0x5eed);

}  // namespace chainopt
