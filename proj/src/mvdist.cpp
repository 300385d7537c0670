#include "stlmm/mvdist.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <random>

#include "stlmm/quadrature.hpp"
#include "stlmm/special.hpp"

namespace stlmm {

namespace {

std::atomic<std::uint64_t> g_seed{20240611ULL};

constexpr std::array<int, 24> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                         41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

const QuadratureRule& legendre_rule(int which) {
  static const QuadratureRule r6 = gauss_legendre(6);
  static const QuadratureRule r12 = gauss_legendre(12);
  static const QuadratureRule r20 = gauss_legendre(20);
  return which == 0 ? r6 : (which == 1 ? r12 : r20);
}

double sov_integrand(const double* w, const MatrixXd& chol, const VectorXd& x, const Dof& nu, VectorXd& y) {
  const Eigen::Index r = x.size();
  int idx = 0;
  double scale = 1.0;
  if (nu.is_finite()) {
    const double chi2 = 2.0 * special::gamma_p_inv(0.5 * nu.value(), w[idx++]);
    scale = std::sqrt(chi2 / nu.value());
  }
  double prod = 1.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    double bound = std::isinf(x(i)) ? x(i) : x(i) * scale;
    if (i > 0) bound -= chol.row(i).head(i).dot(y.head(i));
    const double e = special::normal_cdf(bound / chol(i, i));
    prod *= e;
    if (prod <= 0.0) return 0.0;
    if (i + 1 < r) y(i) = special::normal_quantile(std::clamp(w[idx++] * e, 1e-300, 1.0 - 1e-16));
  }
  return prod;
}

}  // namespace

void set_global_seed(std::uint64_t seed) { g_seed.store(seed); }
std::uint64_t global_seed() { return g_seed.load(); }

namespace detail {

double bvn_upper(double dh, double dk, double r) {
  constexpr double kTwoPi = 2.0 * special::kPi;
  const int ng = std::fabs(r) < 0.3 ? 0 : (std::fabs(r) < 0.75 ? 1 : 2);
  const QuadratureRule& gl = legendre_rule(ng);
  double h = dh;
  double k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
      const double sn = std::sin(0.5 * asr * (gl.nodes(i) + 1.0));
      bvn += gl.weights(i) * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + special::normal_cdf(-h) * special::normal_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::fabs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    bvn = a * std::exp(-0.5 * (bs / as + hk)) * (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
    if (hk > -160.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-0.5 * hk) * std::sqrt(kTwoPi) * special::normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a *= 0.5;
    for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
      const double xs = std::pow(a * (gl.nodes(i) + 1.0), 2);
      const double rs = std::sqrt(1.0 - xs);
      bvn += a * gl.weights(i) * std::exp(-0.5 * (bs / xs + hk)) *
             (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + special::normal_cdf(-std::max(h, k));
  return -bvn + std::max(0.0, special::normal_cdf(-h) - special::normal_cdf(-k));
}

// Dunnett & Sobel (1954) finite series, in the arrangement used by Genz.
double bvt_lower(int nu, double dh, double dk, double r) {
  constexpr double kPi = special::kPi;
  constexpr double kTwoPi = 2.0 * kPi;
  constexpr double kEps = 1e-15;
  if (1.0 - r <= kEps) return special::student_t_cdf(std::min(dh, dk), nu);
  if (r + 1.0 <= kEps) {
    if (dh > -dk) return special::student_t_cdf(dh, nu) - special::student_t_cdf(-dk, nu);
    return 0.0;
  }
  const double v = nu;
  const double snu = std::sqrt(v);
  const double ors = 1.0 - r * r;
  const double hrk = dh - r * dk;
  const double krh = dk - r * dh;
  double xnhk = 0.0;
  double xnkh = 0.0;
  if (std::fabs(hrk) + ors > 0.0) {
    xnhk = hrk * hrk / (hrk * hrk + ors * (v + dk * dk));
    xnkh = krh * krh / (krh * krh + ors * (v + dh * dh));
  }
  const double hs = hrk < 0.0 ? -1.0 : 1.0;
  const double ks = krh < 0.0 ? -1.0 : 1.0;
  double bvt;
  if (nu % 2 == 0) {
    bvt = std::atan2(std::sqrt(ors), -r) / kTwoPi;
    double gmph = dh / std::sqrt(16.0 * (v + dh * dh));
    double gmpk = dk / std::sqrt(16.0 * (v + dk * dk));
    double btnckh = 2.0 * std::atan2(std::sqrt(xnkh), std::sqrt(1.0 - xnkh)) / kPi;
    double btpdkh = 2.0 * std::sqrt(xnkh * (1.0 - xnkh)) / kPi;
    double btnchk = 2.0 * std::atan2(std::sqrt(xnhk), std::sqrt(1.0 - xnhk)) / kPi;
    double btpdhk = 2.0 * std::sqrt(xnhk * (1.0 - xnhk)) / kPi;
    for (int j = 1; j <= nu / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btnckh += btpdkh;
      btpdkh = 2.0 * j * btpdkh * (1.0 - xnkh) / (2.0 * j + 1.0);
      btnchk += btpdhk;
      btpdhk = 2.0 * j * btpdhk * (1.0 - xnhk) / (2.0 * j + 1.0);
      gmph = gmph * (2.0 * j - 1.0) / (2.0 * j * (1.0 + dh * dh / v));
      gmpk = gmpk * (2.0 * j - 1.0) / (2.0 * j * (1.0 + dk * dk / v));
    }
  } else {
    const double qhrk = std::sqrt(dh * dh + dk * dk - 2.0 * r * dh * dk + v * ors);
    const double hkrn = dh * dk + r * v;
    const double hkn = dh * dk - v;
    const double hpk = dh + dk;
    bvt = std::atan2(-snu * (hkn * qhrk + hpk * hkrn), hkn * hkrn - v * hpk * qhrk) / kTwoPi;
    if (bvt < -kEps) bvt += 1.0;
    double gmph = dh / (kTwoPi * snu * (1.0 + dh * dh / v));
    double gmpk = dk / (kTwoPi * snu * (1.0 + dk * dk / v));
    double btnckh = std::sqrt(xnkh);
    double btpdkh = btnckh;
    double btnchk = std::sqrt(xnhk);
    double btpdhk = btnchk;
    for (int j = 1; j <= (nu - 1) / 2; ++j) {
      bvt += gmph * (1.0 + ks * btnckh);
      bvt += gmpk * (1.0 + hs * btnchk);
      btpdkh = (2.0 * j - 1.0) * btpdkh * (1.0 - xnkh) / (2.0 * j);
      btnckh += btpdkh;
      btpdhk = (2.0 * j - 1.0) * btpdhk * (1.0 - xnhk) / (2.0 * j);
      btnchk += btpdhk;
      gmph = gmph * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + dh * dh / v));
      gmpk = gmpk * 2.0 * j / ((2.0 * j + 1.0) * (1.0 + dk * dk / v));
    }
  }
  return bvt;
}

double qmc_mvt_cdf(const VectorXd& x, const MatrixXd& sigma, const Dof& nu, const QmcConfig& qmc) {
  const Eigen::Index r = x.size();
  const MatrixXd chol = checked_llt(sigma).matrixL();
  const int dim = static_cast<int>(r - 1) + (nu.is_finite() ? 1 : 0);
  if (dim == 0) {
    VectorXd y(r);
    return sov_integrand(nullptr, chol, x, nu, y);
  }
  if (dim > static_cast<int>(kPrimes.size())) throw Error(ErrorCode::UnsupportedRank, "unsupported CDF dimension");
  std::vector<double> alpha(dim);
  for (int j = 0; j < dim; ++j) {
    const double s = std::sqrt(static_cast<double>(kPrimes[j]));
    alpha[j] = s - std::floor(s);
  }
  std::mt19937_64 rng(qmc.seed != 0 ? qmc.seed : global_seed());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> shift(dim);
  std::vector<double> w(dim);
  VectorXd y(r);
  double total = 0.0;
  for (int s = 0; s < qmc.shifts; ++s) {
    for (auto& v : shift) v = unif(rng);
    double acc = 0.0;
    for (int k = 1; k <= qmc.points; ++k) {
      for (int j = 0; j < dim; ++j) {
        double z = k * alpha[j] + shift[j];
        z -= std::floor(z);
        w[j] = std::clamp(std::fabs(2.0 * z - 1.0), 1e-15, 1.0 - 1e-15);
      }
      acc += sov_integrand(w.data(), chol, x, nu, y);
    }
    total += acc / qmc.points;
  }
  return total / qmc.shifts;
}

}  // namespace detail

double mvt_cdf(const VectorXd& x, const MatrixXd& sigma, const Dof& nu, const QmcConfig& qmc) {
  const Eigen::Index r = x.size();
  if (r == 0) return 1.0;
  if (sigma.rows() != r || sigma.cols() != r) throw Error(ErrorCode::DimensionMismatch, "mvt_cdf: sigma must be r x r");
  if (!is_symmetric(sigma)) throw Error(ErrorCode::InvalidArgument, "mvt_cdf: sigma not symmetric");
  if (r == 1) {
    if (!(sigma(0, 0) > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "covariance not positive definite");
    return special::student_t_cdf(x(0) / std::sqrt(sigma(0, 0)), nu.value());
  }
  if (r == 2 && nu.is_integer() && (nu.is_infinite() || nu.value() < 2e9)) {
    checked_llt(sigma);
    const double s1 = std::sqrt(sigma(0, 0));
    const double s2 = std::sqrt(sigma(1, 1));
    const double rho = std::clamp(sigma(0, 1) / (s1 * s2), -1.0, 1.0);
    const double h = x(0) / s1;
    const double k = x(1) / s2;
    double p;
    if (nu.is_infinite())
      p = detail::bvn_upper(-h, -k, rho);
    else
      p = detail::bvt_lower(static_cast<int>(nu.value()), h, k, rho);
    return std::clamp(p, 0.0, 1.0);
  }
  return std::clamp(detail::qmc_mvt_cdf(x, sigma, nu, qmc), 0.0, 1.0);
}

MatrixXd sample_mvn(const GaussianParams& params, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  params.validate();
  const MatrixXd chol = checked_llt(params.sigma).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Eigen::Index p = params.mu.size();
  MatrixXd out(n, p);
  VectorXd z(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(j) = normal(rng);
    out.row(i) = (params.mu + chol * z).transpose();
  }
  return out;
}

MatrixXd sample_mvt(const TParams& params, Eigen::Index n, std::uint64_t seed) {
  if (params.nu.is_infinite()) return sample_mvn(params.gaussian(), n, seed);
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be >= 1");
  params.gaussian().validate();
  const MatrixXd chol = checked_llt(params.sigma).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  // Gamma(nu/2, rate nu/2)
  std::gamma_distribution<double> mixing(0.5 * params.nu.value(), 2.0 / params.nu.value());
  const Eigen::Index p = params.mu.size();
  MatrixXd out(n, p);
  VectorXd z(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(j) = normal(rng);
    const double u = mixing(rng);
    out.row(i) = (params.mu + chol * z / std::sqrt(u)).transpose();
  }
  return out;
}

}  // namespace stlmm
