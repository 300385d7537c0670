#pragma once

#include <cstdint>

#include "stlmm/mvdist.hpp"

namespace stlmm {

/// Canonical fundamental skew-t law ST_{p,q}(mu, Omega, Delta, nu); infinite
/// nu is the skew-normal. Sigma = Omega + Delta Delta^T and
/// Lambda = I - Delta^T Sigma^{-1} Delta are cached and must both be SPD.
class CfustParams {
 public:
  CfustParams(VectorXd mu, MatrixXd omega, MatrixXd delta, Dof nu);

  const VectorXd& mu() const { return mu_; }
  const MatrixXd& omega() const { return omega_; }
  const MatrixXd& delta() const { return delta_; }
  const Dof& nu() const { return nu_; }
  Eigen::Index p() const { return mu_.size(); }
  Eigen::Index q() const { return delta_.cols(); }

  const MatrixXd& sigma() const { return sigma_; }
  const MatrixXd& lambda() const { return lambda_; }
  const Eigen::LLT<MatrixXd>& sigma_llt() const { return sigma_llt_; }

  void set_mu(VectorXd mu);
  void set_omega(MatrixXd omega);
  void set_delta(MatrixXd delta);
  void set_nu(Dof nu) { nu_ = nu; }

 private:
  void refresh();

  VectorXd mu_;
  MatrixXd omega_;
  MatrixXd delta_;
  Dof nu_;
  MatrixXd sigma_;
  MatrixXd lambda_;
  Eigen::LLT<MatrixXd> sigma_llt_;
};

struct CfustMoments {
  VectorXd mean;
  MatrixXd variance;
  double kappa1 = 1;  // E[U^{-1/2}]
  double a_nu = 0;
};

/// log of 2^q phi_p(y | mu, Sigma) Phi_q(Delta^T Sigma^{-1}(y - mu) | 0, Lambda).
double cfusn_logpdf(const VectorXd& y, const CfustParams& params, const QmcConfig& qmc = {});
/// log of 2^q t_p(y | mu, Sigma, nu) T_q(. | 0, Lambda, nu + p); infinite nu
/// falls through to cfusn_logpdf.
double cfust_logpdf(const VectorXd& y, const CfustParams& params, const QmcConfig& qmc = {});

/// Rows are draws of mu + U^{-1/2}(Delta |X0| + X1).
MatrixXd cfust_sample(const CfustParams& params, Eigen::Index n, std::uint64_t seed);

CfustMoments cfust_moments(const CfustParams& params);

/// Law of A Y + c.
CfustParams affine_transform(const CfustParams& params, const MatrixXd& a, const VectorXd& c);

/// E[U^{-1/2}] for U ~ Gamma(nu/2, rate nu/2); 1 for infinite nu.
double kappa1(const Dof& nu);
/// Centering constant -sqrt(nu/pi) Gamma((nu-1)/2) / Gamma(nu/2).
double b_constant(const Dof& nu);

}  // namespace stlmm
