#pragma once

#include <Eigen/Dense>

#include "stlmm/error.hpp"

namespace stlmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cholesky factorization; on failure retries once with a diagonal jitter of
/// 1e-10 * trace / p and throws NotPositiveDefinite if that also fails.
Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& a, const char* what = "covariance");

inline double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& a, double tol = 1e-10) {
  return a.rows() == a.cols() && (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + a.cwiseAbs().maxCoeff());
}

template <typename Derived>
typename Derived::PlainObject symmetrized(const Eigen::MatrixBase<Derived>& a) {
  return (0.5 * (a + a.transpose())).eval();
}

/// Upper triangle including the diagonal, stacked column by column.
VectorXd upper_tri(const MatrixXd& a);
/// Inverse of upper_tri for a symmetric q x q matrix.
MatrixXd from_upper_tri(const VectorXd& v, Eigen::Index q);

/// Floors eigenvalues of a symmetric matrix at floor_rel * trace / q.
MatrixXd project_spd(const MatrixXd& a, double floor_rel = 1e-8);

}  // namespace stlmm
