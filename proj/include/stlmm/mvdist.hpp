#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "stlmm/dof.hpp"
#include "stlmm/error.hpp"
#include "stlmm/linalg.hpp"
#include "stlmm/special.hpp"

namespace stlmm {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar = double>
struct BasicGaussianParams {
  Vector<Scalar> mu;
  Matrix<Scalar> sigma;

  void validate() const {
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size())
      throw Error(ErrorCode::DimensionMismatch, "sigma must be p x p with p = dim(mu)");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-10))
      throw Error(ErrorCode::InvalidArgument, "sigma not symmetric");
  }
};

template <typename Scalar = double>
struct BasicTParams {
  Vector<Scalar> mu;
  Matrix<Scalar> sigma;
  Dof nu = Dof::infinite();

  BasicGaussianParams<Scalar> gaussian() const { return {mu, sigma}; }
};

using GaussianParams = BasicGaussianParams<double>;
using TParams = BasicTParams<double>;

namespace detail {

template <typename Scalar>
Eigen::LLT<Matrix<Scalar>> spd_factor(const Matrix<Scalar>& sigma) {
  Eigen::LLT<Matrix<Scalar>> llt(sigma);
  if (llt.info() != Eigen::Success) {
    Matrix<Scalar> jittered = sigma;
    jittered.diagonal().array() += Scalar(1e-10) * sigma.trace() / Scalar(sigma.rows());
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::NotPositiveDefinite, "covariance not positive definite");
  }
  return llt;
}

}  // namespace detail

/// log t_p density written in terms of the Mahalanobis distance d and log|Sigma|.
/// Infinite nu gives the Gaussian.
template <typename Scalar>
Scalar mvt_log_density(Scalar mahalanobis, Eigen::Index p, Scalar log_det, const Dof& nu) {
  using std::log;
  const Scalar pd = Scalar(p);
  if (nu.is_infinite())
    return Scalar(-0.5) * (pd * Scalar(special::kLog2Pi) + log_det + mahalanobis);
  const Scalar v = Scalar(nu.value());
  return Scalar(special::log_gamma(0.5 * (nu.value() + double(p))) - special::log_gamma(0.5 * nu.value())) -
         Scalar(0.5) * pd * (log(v) + Scalar(special::kLogPi)) - Scalar(0.5) * log_det -
         Scalar(0.5) * (v + pd) * log(Scalar(1) + mahalanobis / v);
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar mvn_logpdf(const Eigen::MatrixBase<Derived>& x, const BasicGaussianParams<Scalar>& params) {
  params.validate();
  if (x.size() != params.mu.size()) throw Error(ErrorCode::DimensionMismatch, "dim(x) != dim(mu)");
  const auto llt = detail::spd_factor<Scalar>(params.sigma);
  const Vector<Scalar> z = llt.matrixL().solve(Vector<Scalar>(x - params.mu));
  const Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  return mvt_log_density<Scalar>(z.squaredNorm(), x.size(), log_det, Dof::infinite());
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar mvt_logpdf(const Eigen::MatrixBase<Derived>& x, const BasicTParams<Scalar>& params) {
  if (params.nu.is_infinite()) return mvn_logpdf(x, params.gaussian());
  params.gaussian().validate();
  if (x.size() != params.mu.size()) throw Error(ErrorCode::DimensionMismatch, "dim(x) != dim(mu)");
  const auto llt = detail::spd_factor<Scalar>(params.sigma);
  const Vector<Scalar> z = llt.matrixL().solve(Vector<Scalar>(x - params.mu));
  const Scalar log_det = Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  return mvt_log_density<Scalar>(z.squaredNorm(), x.size(), log_det, params.nu);
}

/// Randomized quasi-Monte Carlo budget for CDFs that have no closed form.
struct QmcConfig {
  int points = 8192;
  int shifts = 8;
  std::uint64_t seed = 0;  // 0: use the process-wide seed
};

/// Process-wide seed that QMC integration derives its shifts from.
void set_global_seed(std::uint64_t seed);
std::uint64_t global_seed();

/// P(T <= x) for T ~ t_r(0, sigma, nu). r = 1 and r = 2 with integer (or
/// infinite) nu are evaluated in closed form; everything else by a
/// separation-of-variables lattice rule with fixed randomization.
double mvt_cdf(const VectorXd& x, const MatrixXd& sigma, const Dof& nu, const QmcConfig& qmc = {});

/// Rows are independent draws.
MatrixXd sample_mvn(const GaussianParams& params, Eigen::Index n, std::uint64_t seed);
MatrixXd sample_mvt(const TParams& params, Eigen::Index n, std::uint64_t seed);

namespace detail {
/// P(X > dh, Y > dk) for a standard bivariate normal with correlation r.
double bvn_upper(double dh, double dk, double r);
/// P(X < dh, Y < dk) for a standard bivariate t with integer nu.
double bvt_lower(int nu, double dh, double dk, double r);
/// Lattice-rule estimate; exposed so tests can exercise it on r = 2.
double qmc_mvt_cdf(const VectorXd& x, const MatrixXd& sigma, const Dof& nu, const QmcConfig& qmc);
}  // namespace detail

}  // namespace stlmm
