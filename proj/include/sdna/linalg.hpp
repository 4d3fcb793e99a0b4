#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "sdna/errors.hpp"
#include "sdna/types.hpp"

namespace sdna {

// Dense symmetric kernels shared by every solver: principal submatrices M_S,
// subset-restricted solves h = (M_S)^+ g, eigenvalue extremes and PSD tests.
// Matrices are plain dense Eigen matrices; callers own the symmetry contract
// (M(i,j) == M(j,i)), which `is_symmetric` can verify.

// Relative pivot threshold below which a principal block is declared
// singular/indefinite instead of being silently regularized.
inline constexpr double kPivotRelTol = 1e-12;

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m,
                  typename Derived::Scalar tol = 0) {
  if (m.rows() != m.cols()) return false;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = j + 1; i < m.rows(); ++i)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

// The compacted |S| x |S| block M[S, S].
template <typename Derived>
MatrixX<typename Derived::Scalar> gather_block(
    const Eigen::MatrixBase<Derived>& m, const Subset& s) {
  using Scalar = typename Derived::Scalar;
  if (s.ambient() != m.rows())
    throw InvalidSubsetError("subset ambient dimension " +
                             std::to_string(s.ambient()) +
                             " does not match matrix dimension " +
                             std::to_string(m.rows()));
  const Index k = s.size();
  MatrixX<Scalar> block(k, k);
  for (Index j = 0; j < k; ++j)
    for (Index i = 0; i < k; ++i) block(i, j) = m(s[i], s[j]);
  return block;
}

// M_S = I_S M I_S: agrees with M on rows/columns in S, zero elsewhere.
template <typename Derived>
MatrixX<typename Derived::Scalar> principal_submatrix(
    const Eigen::MatrixBase<Derived>& m, const Subset& s) {
  using Scalar = typename Derived::Scalar;
  if (s.ambient() != m.rows())
    throw InvalidSubsetError("subset ambient dimension " +
                             std::to_string(s.ambient()) +
                             " does not match matrix dimension " +
                             std::to_string(m.rows()));
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(m.rows(), m.cols());
  for (Index j : s)
    for (Index i : s) out(i, j) = m(i, j);
  return out;
}

namespace internal {

// LDLT of a compacted principal block with an explicit pivot check; the
// problems assume M > 0, so a failed factorization is surfaced, not patched.
template <typename Scalar>
Eigen::LDLT<MatrixX<Scalar>> factor_block(const MatrixX<Scalar>& block,
                                          const Subset& s) {
  Eigen::LDLT<MatrixX<Scalar>> ldlt(block);
  const Scalar diag_max = block.diagonal().maxCoeff();
  const Scalar threshold = kPivotRelTol * std::max<Scalar>(diag_max, Scalar(0));
  if (ldlt.info() != Eigen::Success || !(diag_max > Scalar(0)) ||
      ldlt.vectorD().minCoeff() <= threshold) {
    throw FactorizationError("principal block on subset " + s.to_string() +
                             " is not positive definite");
  }
  return ldlt;
}

}  // namespace internal

// h = (M_S)^+ g: the vector supported on S whose S-block solve reproduces
// g_S. Only the compacted |S| x |S| block is factored.
template <typename Derived, typename VecDerived>
VectorX<typename Derived::Scalar> restricted_solve(
    const Eigen::MatrixBase<Derived>& m, const Subset& s,
    const Eigen::MatrixBase<VecDerived>& g) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> block = gather_block(m, s);
  const auto ldlt = internal::factor_block(block, s);
  VectorX<Scalar> rhs(s.size());
  for (Index k = 0; k < s.size(); ++k) rhs(k) = g(s[k]);
  const VectorX<Scalar> hs = ldlt.solve(rhs);
  VectorX<Scalar> h = VectorX<Scalar>::Zero(m.rows());
  for (Index k = 0; k < s.size(); ++k) h(s[k]) = hs(k);
  return h;
}

// The padded n x n pseudoinverse (M_S)^+ itself (zero outside S x S).
template <typename Derived>
MatrixX<typename Derived::Scalar> restricted_pseudoinverse(
    const Eigen::MatrixBase<Derived>& m, const Subset& s) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> block = gather_block(m, s);
  const auto ldlt = internal::factor_block(block, s);
  const MatrixX<Scalar> inv =
      ldlt.solve(MatrixX<Scalar>::Identity(s.size(), s.size()));
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(m.rows(), m.cols());
  for (Index j = 0; j < s.size(); ++j)
    for (Index i = 0; i < s.size(); ++i) out(s[i], s[j]) = inv(i, j);
  return out;
}

template <typename Derived>
typename Derived::Scalar smallest_eigenvalue(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) throw std::invalid_argument("matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <typename Derived>
typename Derived::Scalar largest_eigenvalue(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) throw std::invalid_argument("matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

// true iff lambda_min(M) >= -tol.
template <typename Derived>
bool is_psd(const Eigen::MatrixBase<Derived>& m,
            typename Derived::Scalar tol = 0) {
  return smallest_eigenvalue(m) >= -tol;
}

// Symmetric square root via eigendecomposition; requires M PSD up to tiny
// negative roundoff, which is clamped.
template <typename Derived>
MatrixX<typename Derived::Scalar> symmetric_sqrt(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(m);
  const Scalar floor = -Scalar(1e-12) * std::max<Scalar>(
      Scalar(1), std::abs(es.eigenvalues().maxCoeff()));
  if (es.eigenvalues().minCoeff() < floor)
    throw FactorizationError("symmetric square root of an indefinite matrix");
  VectorX<Scalar> roots = es.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() *
         es.eigenvectors().transpose();
}

// lambda_min(X^{-1} Y) for symmetric X > 0, Y >= 0, evaluated as
// lambda_min(Y^{1/2} X^{-1} Y^{1/2}).
template <typename Scalar>
Scalar smallest_generalized_eigenvalue(const MatrixX<Scalar>& x,
                                       const MatrixX<Scalar>& y) {
  const MatrixX<Scalar> yh = symmetric_sqrt(y);
  const auto ldlt = internal::factor_block(x, Subset::full(x.rows()));
  const MatrixX<Scalar> inner = yh * ldlt.solve(yh);
  return smallest_eigenvalue(inner);
}

}  // namespace sdna
