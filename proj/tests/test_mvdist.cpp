#include <initializer_list>
#include <cmath>
#include <random>

#include "doctest.h"
#include "stlmm/mvdist.hpp"
#include "stlmm/quadrature.hpp"
#include "test_util.hpp"

using namespace stlmm;

namespace {

// Bivariate t lower-orthant probability by conditioning on the first
// coordinate and integrating the univariate pieces numerically.
double bvt_oracle(double nu, double h, double k, double rho) {
  const auto gl = gauss_legendre(64);
  // x = h - s / (1 - s), s in (0, 1), split into panels for accuracy.
  double total = 0.0;
  const int panels = 200;
  for (int p = 0; p < panels; ++p) {
    const double a = double(p) / panels;
    const double b = double(p + 1) / panels;
    for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
      const double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes(i);
      const double x = h - s / (1.0 - s);
      const double jac = 1.0 / ((1.0 - s) * (1.0 - s));
      double fx;
      double cond;
      if (std::isinf(nu)) {
        fx = special::normal_pdf(x);
        cond = special::normal_cdf((k - rho * x) / std::sqrt(1 - rho * rho));
      } else {
        fx = special::student_t_pdf(x, nu);
        const double scale = std::sqrt((1 - rho * rho) * (nu + x * x) / (nu + 1));
        cond = special::student_t_cdf((k - rho * x) / scale, nu + 1);
      }
      total += 0.5 * (b - a) * gl.weights(i) * fx * cond * jac;
    }
  }
  return total;
}

MatrixXd corr2(double rho) {
  MatrixXd s(2, 2);
  s << 1, rho, rho, 1;
  return s;
}

}  // namespace

TEST_CASE("mvn_logpdf trivial values") {
  GaussianParams g{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
  CHECK(mvn_logpdf(VectorXd::Zero(1), g) == doctest::Approx(std::log(0.3989422804014327)).epsilon(1e-14));
  GaussianParams g2{VectorXd::Zero(2), MatrixXd::Identity(2, 2)};
  CHECK(mvn_logpdf(VectorXd::Zero(2), g2) == doctest::Approx(-1.8378770664093453).epsilon(1e-14));
}

TEST_CASE("mvn_logpdf matches dense inverse/determinant formula") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd s = test::random_spd(3, rng);
    const VectorXd mu = test::random_vector(3, rng);
    const VectorXd x = test::random_vector(3, rng);
    const double direct = -1.5 * std::log(2 * special::kPi) - 0.5 * std::log(s.determinant()) -
                          0.5 * (x - mu).dot(s.inverse() * (x - mu));
    CHECK(mvn_logpdf(x, GaussianParams{mu, s}) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("mvn_logpdf is expression friendly and scalar generic") {
  BasicGaussianParams<float> g{Eigen::VectorXf::Zero(2), Eigen::MatrixXf::Identity(2, 2)};
  const float v = mvn_logpdf(Eigen::VectorXf::Ones(2) * 0.0f, g);
  CHECK(v == doctest::Approx(-1.8378770664).epsilon(1e-6));
}

TEST_CASE("non-SPD covariance is a structured error") {
  MatrixXd s(2, 2);
  s << 1, 2, 2, 1;
  try {
    mvn_logpdf(VectorXd::Zero(2), GaussianParams{VectorXd::Zero(2), s});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotPositiveDefinite);
    CHECK(std::string(e.what()) == "covariance not positive definite");
  }
  CHECK_THROWS_AS(mvt_cdf(VectorXd::Zero(2), s, Dof(4)), Error);
}

TEST_CASE("mvt_logpdf") {
  TParams cauchy{VectorXd::Zero(1), MatrixXd::Identity(1, 1), Dof(1)};
  CHECK(mvt_logpdf(VectorXd::Zero(1), cauchy) == doctest::Approx(std::log(1 / special::kPi)).epsilon(1e-14));
  TParams big{VectorXd::Zero(1), MatrixXd::Identity(1, 1), Dof(1e6)};
  GaussianParams g{VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
  for (double x : {-2.0, 0.0, 2.0}) {
    VectorXd v(1);
    v << x;
    CHECK(std::fabs(mvt_logpdf(v, big) - mvn_logpdf(v, g)) < 1e-4);
  }
  TParams inf{VectorXd::Zero(1), MatrixXd::Identity(1, 1), Dof::infinite()};
  CHECK(mvt_logpdf(VectorXd::Ones(1), inf) == mvn_logpdf(VectorXd::Ones(1), g));

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    TParams t{test::random_vector(2, rng), test::random_spd(2, rng), Dof(4.5)};
    const VectorXd v = test::random_vector(2, rng);
    CHECK(mvt_logpdf(VectorXd(t.mu + v), t) == doctest::Approx(mvt_logpdf(VectorXd(t.mu - v), t)).epsilon(1e-13));
  }
}

TEST_CASE("mvn density integrates to one on a grid") {
  GaussianParams g1{VectorXd::Constant(1, 0.3), MatrixXd::Constant(1, 1, 0.7)};
  double s1 = 0.0;
  const double h1 = 0.001;
  for (double x = -10; x <= 10; x += h1) s1 += std::exp(mvn_logpdf(VectorXd::Constant(1, x), g1)) * h1;
  CHECK(std::fabs(s1 - 1.0) < 1e-4);

  MatrixXd s(2, 2);
  s << 1.0, 0.4, 0.4, 0.6;
  GaussianParams g2{VectorXd::Zero(2), s};
  double s2 = 0.0;
  const double h = 0.02;
  VectorXd v(2);
  for (double x = -8; x <= 8; x += h)
    for (double y = -8; y <= 8; y += h) {
      v << x, y;
      s2 += std::exp(mvn_logpdf(v, g2)) * h * h;
    }
  CHECK(std::fabs(s2 - 1.0) < 1e-4);
}

TEST_CASE("mvt_cdf trivial and symmetric values") {
  for (double nu : {1.0, 3.0, 9.5}) CHECK(mvt_cdf(VectorXd::Zero(1), MatrixXd::Identity(1, 1), Dof(nu)) == 0.5);
  CHECK(mvt_cdf(VectorXd::Zero(0), MatrixXd(0, 0), Dof(3)) == 1.0);
  for (double nu : {1.0, 4.0, 7.0, 30.0}) CHECK(mvt_cdf(VectorXd::Zero(2), MatrixXd::Identity(2, 2), Dof(nu)) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(mvt_cdf(VectorXd::Zero(2), MatrixXd::Identity(2, 2), Dof::infinite()) == doctest::Approx(0.25).epsilon(1e-14));

  const double exact = 0.25 + std::asin(0.5) / (2 * special::kPi);
  CHECK(exact == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  // sign-pattern Monte Carlo oracle
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const int draws = 1000000;
  int hits = 0;
  for (int i = 0; i < draws; ++i) {
    const double z1 = n01(rng);
    const double z2 = 0.5 * z1 + std::sqrt(0.75) * n01(rng);
    hits += (z1 <= 0 && z2 <= 0);
  }
  const double mc = double(hits) / draws;
  const double se = std::sqrt(mc * (1 - mc) / draws);
  CHECK(std::fabs(mc - exact) < 3 * se);
  for (double nu : {3.0, 8.0, 50.0}) CHECK(std::fabs(mvt_cdf(VectorXd::Zero(2), corr2(0.5), Dof(nu)) - exact) < 2e-4);
  CHECK(std::fabs(mvt_cdf(VectorXd::Zero(2), corr2(0.5), Dof::infinite()) - exact) < 1e-12);

  for (double nu : {1.0, 2.5, 6.0, 1e5})
    for (double x : {-4.0, -0.3, 1.1, 8.0}) {
      const double a = mvt_cdf(VectorXd::Constant(1, x), MatrixXd::Constant(1, 1, 2.0), Dof(nu));
      const double b = mvt_cdf(VectorXd::Constant(1, -x), MatrixXd::Constant(1, 1, 2.0), Dof(nu));
      CHECK(std::fabs(a + b - 1.0) < 1e-10);
    }
}

TEST_CASE("closed-form bivariate t and normal against a quadrature oracle") {
  const double cases[][3] = {{0.3, -0.7, 0.2}, {1.5, 0.4, -0.6}, {-1.2, -2.0, 0.8}, {2.0, 2.5, 0.95},
                             {-0.5, 1.0, -0.97}, {0.0, 0.0, 0.5}, {-3.0, 1.0, 0.4}};
  for (const auto& c : cases) {
    for (int nu : {1, 2, 3, 4, 5, 8, 13, 30}) {
      const double got = detail::bvt_lower(nu, c[0], c[1], c[2]);
      CHECK(got == doctest::Approx(bvt_oracle(nu, c[0], c[1], c[2])).epsilon(1e-9));
    }
    const double gotn = detail::bvn_upper(-c[0], -c[1], c[2]);
    CHECK(gotn == doctest::Approx(bvt_oracle(INFINITY, c[0], c[1], c[2])).epsilon(1e-9));
  }
}

TEST_CASE("lattice rule matches closed forms within the documented accuracy") {
  MatrixXd s(2, 2);
  s << 2.0, -0.6, -0.6, 0.8;
  VectorXd x(2);
  x << 0.4, -0.3;
  for (double nu : {3.0, 7.0}) {
    const double qmc = detail::qmc_mvt_cdf(x, s, Dof(nu), {});
    CHECK(std::fabs(qmc - mvt_cdf(x, s, Dof(nu))) < 5e-5);
  }
  CHECK(std::fabs(detail::qmc_mvt_cdf(x, s, Dof::infinite(), {}) - mvt_cdf(x, s, Dof::infinite())) < 5e-5);
  // non-integer dof goes through the lattice rule; compare with the quadrature oracle
  const double rho = -0.6 / std::sqrt(1.6);
  CHECK(std::fabs(mvt_cdf(x, s, Dof(4.5)) - bvt_oracle(4.5, 0.4 / std::sqrt(2.0), -0.3 / std::sqrt(0.8), rho)) < 5e-5);
  // determinism
  CHECK(mvt_cdf(x, s, Dof(4.5)) == mvt_cdf(x, s, Dof(4.5)));
}

TEST_CASE("trivariate orthant probabilities") {
  MatrixXd r(3, 3);
  r << 1, 0.3, -0.2, 0.3, 1, 0.5, -0.2, 0.5, 1;
  const double exact = 0.125 + (std::asin(0.3) + std::asin(-0.2) + std::asin(0.5)) / (4 * special::kPi);
  for (double nu : {3.0, 8.0}) CHECK(std::fabs(mvt_cdf(VectorXd::Zero(3), r, Dof(nu)) - exact) < 5e-5);
  CHECK(std::fabs(mvt_cdf(VectorXd::Zero(3), r, Dof::infinite()) - exact) < 5e-5);
}

TEST_CASE("mvt_cdf is monotone in each coordinate") {
  MatrixXd s(2, 2);
  s << 1.0, 0.7, 0.7, 1.5;
  for (double nu : {2.0, 5.0}) {
    double prev = 0.0;
    for (double t = -5; t <= 5; t += 0.25) {
      VectorXd x(2);
      x << t, 0.3;
      const double v = mvt_cdf(x, s, Dof(nu));
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("samplers") {
  GaussianParams g{(VectorXd(2) << 1, 2).finished(), MatrixXd::Identity(2, 2)};
  const MatrixXd a = sample_mvn(g, 100000, 9);
  CHECK((a.colwise().mean().transpose() - g.mu).cwiseAbs().maxCoeff() < 0.02);
  CHECK(sample_mvn(g, 10, 4) == sample_mvn(g, 10, 4));

  MatrixXd s(2, 2);
  s << 1.0, 0.3, 0.3, 0.5;
  TParams t{VectorXd::Zero(2), s, Dof(5)};
  const MatrixXd b = sample_mvt(t, 1000000, 21);
  const MatrixXd centered = b.rowwise() - b.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / double(b.rows() - 1);
  const MatrixXd expect = s * 5.0 / 3.0;
  CHECK(((cov - expect).array() / expect.array()).abs().maxCoeff() < 0.05);
  CHECK(sample_mvt(t, 5, 1) == sample_mvt(t, 5, 1));
  CHECK_THROWS_AS(sample_mvn(g, 0, 1), Error);
}
