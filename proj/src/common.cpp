#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "stlmm/dof.hpp"
#include "stlmm/error.hpp"
#include "stlmm/linalg.hpp"

namespace stlmm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::NotPositiveDefinite: return "not positive definite";
    case ErrorCode::DegenerateTransform: return "degenerate transform";
    case ErrorCode::NegligibleMass: return "negligible mass";
    case ErrorCode::MomentUndefined: return "moment undefined";
    case ErrorCode::UnsupportedRank: return "unsupported rank";
    case ErrorCode::InsufficientAcceptance: return "insufficient acceptance";
    case ErrorCode::RankDeficientDesign: return "rank-deficient design";
    case ErrorCode::DegenerateSkewness: return "degenerate skewness";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::SubjectFailure: return "subject failure";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Io: return "i/o error";
  }
  return "unknown";
}

std::string Dof::to_string() const {
  if (infinite_) return "inf";
  std::ostringstream os;
  os << value_;
  return os.str();
}

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& a, const char* what) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return llt;
  const double jitter = 1e-10 * a.trace() / static_cast<double>(a.rows());
  if (jitter > 0.0) {
    MatrixXd b = a;
    b.diagonal().array() += jitter;
    llt.compute(b);
    if (llt.info() == Eigen::Success) return llt;
  }
  throw Error(ErrorCode::NotPositiveDefinite, std::string(what) + " not positive definite");
}

VectorXd upper_tri(const MatrixXd& a) {
  const Eigen::Index q = a.rows();
  VectorXd v(q * (q + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) v(k++) = a(i, j);
  return v;
}

MatrixXd from_upper_tri(const VectorXd& v, Eigen::Index q) {
  if (v.size() != q * (q + 1) / 2) throw Error(ErrorCode::DimensionMismatch, "upper-triangle length mismatch");
  MatrixXd a(q, q);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      a(i, j) = v(k);
      a(j, i) = v(k);
      ++k;
    }
  return a;
}

MatrixXd project_spd(const MatrixXd& a, double floor_rel) {
  const MatrixXd s = symmetrized(a);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  const double floor = floor_rel * std::max(s.trace(), 0.0) / static_cast<double>(s.rows());
  if (eig.eigenvalues().minCoeff() > floor) return s;
  const VectorXd lam = eig.eigenvalues().cwiseMax(std::max(floor, 1e-300));
  return symmetrized(eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose());
}

}  // namespace stlmm
