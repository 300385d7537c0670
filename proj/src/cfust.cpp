#include "stlmm/cfust.hpp"

#include <random>

namespace stlmm {

CfustParams::CfustParams(VectorXd mu, MatrixXd omega, MatrixXd delta, Dof nu)
    : mu_(std::move(mu)), omega_(std::move(omega)), delta_(std::move(delta)), nu_(nu) {
  refresh();
}

void CfustParams::set_mu(VectorXd mu) {
  mu_ = std::move(mu);
  refresh();
}

void CfustParams::set_omega(MatrixXd omega) {
  omega_ = std::move(omega);
  refresh();
}

void CfustParams::set_delta(MatrixXd delta) {
  delta_ = std::move(delta);
  refresh();
}

void CfustParams::refresh() {
  const Eigen::Index p = mu_.size();
  if (omega_.rows() != p || omega_.cols() != p) throw Error(ErrorCode::DimensionMismatch, "Omega must be p x p");
  if (delta_.rows() != p) throw Error(ErrorCode::DimensionMismatch, "Delta must have p rows");
  if (!mu_.allFinite() || !omega_.allFinite() || !delta_.allFinite())
    throw Error(ErrorCode::NonFinite, "non-finite skew-t parameters");
  if (!is_symmetric(omega_)) throw Error(ErrorCode::InvalidArgument, "Omega not symmetric");
  checked_llt(omega_, "Omega");
  sigma_ = omega_ + delta_ * delta_.transpose();
  sigma_llt_ = checked_llt(sigma_, "Sigma");
  lambda_ = symmetrized(MatrixXd(MatrixXd::Identity(q(), q()) - delta_.transpose() * sigma_llt_.solve(delta_)));
  if (q() > 0) checked_llt(lambda_, "Lambda");
}

double kappa1(const Dof& nu) {
  if (nu.is_infinite()) return 1.0;
  const double v = nu.value();
  if (v <= 1.0) throw Error(ErrorCode::MomentUndefined, "E[U^{-1/2}] undefined for nu <= 1");
  return std::sqrt(v / 2.0) * std::exp(special::log_gamma((v - 1.0) / 2.0) - special::log_gamma(v / 2.0));
}

double b_constant(const Dof& nu) {
  if (nu.is_infinite()) return -std::sqrt(2.0 / special::kPi);
  const double v = nu.value();
  if (v <= 1.0) throw Error(ErrorCode::MomentUndefined, "b(nu) undefined for nu <= 1");
  return -std::sqrt(v / special::kPi) * std::exp(special::log_gamma((v - 1.0) / 2.0) - special::log_gamma(v / 2.0));
}

namespace {

double log_skew_factor(const CfustParams& prm, const VectorXd& resid, double d, const QmcConfig& qmc) {
  const Eigen::Index q = prm.q();
  if (q == 0) return 0.0;
  const VectorXd a = prm.delta().transpose() * prm.sigma_llt().solve(resid);
  const double pd = double(prm.p());
  if (prm.nu().is_infinite())
    return q * std::log(2.0) + std::log(mvt_cdf(a, prm.lambda(), prm.nu(), qmc));
  const double v = prm.nu().value();
  const VectorXd scaled = a * std::sqrt((v + pd) / (v + d));
  return q * std::log(2.0) + std::log(mvt_cdf(scaled, prm.lambda(), prm.nu().plus(pd), qmc));
}

}  // namespace

double cfusn_logpdf(const VectorXd& y, const CfustParams& params, const QmcConfig& qmc) {
  if (params.nu().is_finite()) throw Error(ErrorCode::InvalidArgument, "cfusn_logpdf needs infinite nu");
  return cfust_logpdf(y, params, qmc);
}

double cfust_logpdf(const VectorXd& y, const CfustParams& params, const QmcConfig& qmc) {
  if (y.size() != params.p()) throw Error(ErrorCode::DimensionMismatch, "dim(y) != p");
  const VectorXd resid = y - params.mu();
  const auto& llt = params.sigma_llt();
  const double d = VectorXd(llt.matrixL().solve(resid)).squaredNorm();
  return mvt_log_density(d, params.p(), log_det(llt), params.nu()) + log_skew_factor(params, resid, d, qmc);
}

MatrixXd cfust_sample(const CfustParams& params, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample size must be >= 1");
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  const MatrixXd l = checked_llt(params.omega(), "Omega").matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  const bool finite = params.nu().is_finite();
  std::gamma_distribution<double> gamma(finite ? params.nu().value() / 2.0 : 1.0,
                                        finite ? 2.0 / params.nu().value() : 1.0);
  MatrixXd out(n, p);
  VectorXd x0(q);
  VectorXd x1(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < q; ++k) x0(k) = std::fabs(n01(rng));
    for (Eigen::Index k = 0; k < p; ++k) x1(k) = n01(rng);
    const double scale = finite ? 1.0 / std::sqrt(gamma(rng)) : 1.0;
    out.row(i) = (params.mu() + scale * (params.delta() * x0 + l * x1)).transpose();
  }
  return out;
}

CfustMoments cfust_moments(const CfustParams& params) {
  CfustMoments m;
  const Dof& nu = params.nu();
  const double c = std::sqrt(2.0 / special::kPi);
  const VectorXd col_sums = params.delta() * VectorXd::Ones(params.q());
  m.kappa1 = kappa1(nu);
  m.mean = params.mu() + c * m.kappa1 * col_sums;
  const MatrixXd ddt = params.delta() * params.delta().transpose();
  if (nu.is_infinite()) {
    m.a_nu = 0.0;
    m.variance = params.sigma() - (2.0 / special::kPi) * ddt;
  } else {
    const double v = nu.value();
    if (v <= 2.0) throw Error(ErrorCode::MomentUndefined, "variance undefined for nu <= 2");
    m.a_nu = (2.0 / special::kPi) * (v / (v - 2.0) - m.kappa1 * m.kappa1);
    m.variance = v / (v - 2.0) * (params.sigma() - (2.0 / special::kPi) * ddt) + m.a_nu * col_sums * col_sums.transpose();
  }
  m.variance = symmetrized(m.variance);
  return m;
}

CfustParams affine_transform(const CfustParams& params, const MatrixXd& a, const VectorXd& c) {
  if (a.cols() != params.p() || c.size() != a.rows())
    throw Error(ErrorCode::DimensionMismatch, "affine transform dimensions do not match");
  const MatrixXd omega = symmetrized(MatrixXd(a * params.omega() * a.transpose()));
  Eigen::LLT<MatrixXd> llt(omega);
  if (a.rows() > params.p() || llt.info() != Eigen::Success)
    throw Error(ErrorCode::DegenerateTransform, "degenerate transform");
  return CfustParams(a * params.mu() + c, omega, a * params.delta(), params.nu());
}

}  // namespace stlmm
