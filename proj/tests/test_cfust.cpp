#include <initializer_list>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "stlmm/cfust.hpp"
#include "test_util.hpp"

using namespace stlmm;

namespace {

MatrixXd m2(double a, double b, double c, double d) { return (MatrixXd(2, 2) << a, b, c, d).finished(); }

CfustParams scenario_a(Dof nu) {
  const MatrixXd delta = m2(0.6, 1.5, -1.0, 3.0);
  return CfustParams(b_constant(nu) * delta * VectorXd::Ones(2), m2(0.5, -0.2, -0.2, 0.5), delta, nu);
}

double integrate_1d(const CfustParams& prm, double lo, double hi, double h) {
  double s = 0.0;
  for (double x = lo + 0.5 * h; x < hi; x += h) s += std::exp(cfust_logpdf(VectorXd::Constant(1, x), prm)) * h;
  return s;
}

double integrate_2d(const CfustParams& prm, double lo, double hi, double h) {
  double s = 0.0;
  VectorXd v(2);
  for (double x = lo + 0.5 * h; x < hi; x += h)
    for (double y = lo + 0.5 * h; y < hi; y += h) {
      v << x, y;
      s += std::exp(cfust_logpdf(v, prm));
    }
  return s * h * h;
}

}  // namespace

TEST_CASE("b constant") {
  CHECK(std::round(b_constant(Dof(5)) * 1000) / 1000 == doctest::Approx(-0.949));
  CHECK(b_constant(Dof::infinite()) == doctest::Approx(-0.7978845608).epsilon(1e-10));
  for (double v : {3.0, 5.0, 10.0, 30.0})
    CHECK(std::fabs(b_constant(Dof(v)) + std::sqrt(2 / special::kPi) * kappa1(Dof(v))) < 1e-12);
  // study-2 location: b(5) times the row sums of its Delta
  CHECK(std::round(b_constant(Dof(5)) * 2.4 * 1000) / 1000 == doctest::Approx(-2.278));
  CHECK(std::round(b_constant(Dof(5)) * 3.1 * 1000) / 1000 == doctest::Approx(-2.942));
  CHECK(std::round(b_constant(Dof(5)) * 2.1 * 1000) / 1000 == doctest::Approx(-1.993));
  CHECK(std::round(b_constant(Dof(5)) * 2.0 * 1000) / 1000 == doctest::Approx(-1.898));
  CHECK(b_constant(Dof(1e8)) == doctest::Approx(b_constant(Dof::infinite())).epsilon(1e-6));
  CHECK_THROWS_AS(b_constant(Dof(1)), Error);
}

TEST_CASE("construction checks") {
  CHECK_THROWS_AS(CfustParams(VectorXd::Zero(2), m2(1, 2, 2, 1), MatrixXd::Zero(2, 1), Dof(3)), Error);
  CHECK_THROWS_AS(CfustParams(VectorXd::Zero(2), MatrixXd::Identity(3, 3), MatrixXd::Zero(2, 1), Dof(3)), Error);
  CfustParams p(VectorXd::Zero(2), MatrixXd::Identity(2, 2), m2(1, 0, 0, 2), Dof(3));
  CHECK(p.lambda()(0, 0) == doctest::Approx(0.5));
  CHECK(p.lambda()(1, 1) == doctest::Approx(0.2));
  p.set_delta(MatrixXd::Zero(2, 2));
  CHECK(p.lambda().isApprox(MatrixXd::Identity(2, 2)));
}

TEST_CASE("skew-normal density reductions") {
  std::mt19937_64 rng(2);
  for (int q : {1, 2, 3}) {
    const MatrixXd omega = test::random_spd(3, rng);
    const VectorXd mu = test::random_vector(3, rng);
    CfustParams p(mu, omega, MatrixXd::Zero(3, q), Dof::infinite());
    for (int k = 0; k < 5; ++k) {
      const VectorXd y = test::random_vector(3, rng);
      CHECK(cfusn_logpdf(y, p) == doctest::Approx(mvn_logpdf(y, GaussianParams{mu, omega})).epsilon(1e-12));
    }
  }
  const double d = 0.6;
  CfustParams p(VectorXd::Zero(1), MatrixXd::Constant(1, 1, 1 - d * d), MatrixXd::Constant(1, 1, d), Dof::infinite());
  const double lambda = d / std::sqrt(1 - d * d);
  CHECK(lambda == doctest::Approx(0.75));
  for (double y : {-1.0, 0.0, 1.0})
    CHECK(std::exp(cfusn_logpdf(VectorXd::Constant(1, y), p)) ==
          doctest::Approx(2 * special::normal_pdf(y) * special::normal_cdf(lambda * y)).epsilon(1e-12));
  CHECK_THROWS_AS(cfusn_logpdf(VectorXd::Zero(1), CfustParams(VectorXd::Zero(1), MatrixXd::Identity(1, 1),
                                                               MatrixXd::Zero(1, 1), Dof(4))),
                  Error);
}

TEST_CASE("skew-t density reductions and limits") {
  std::mt19937_64 rng(4);
  for (int q : {1, 2}) {
    const MatrixXd omega = test::random_spd(2, rng);
    const VectorXd mu = test::random_vector(2, rng);
    CfustParams p(mu, omega, MatrixXd::Zero(2, q), Dof(4.0));
    for (int k = 0; k < 5; ++k) {
      const VectorXd y = test::random_vector(2, rng);
      CHECK(cfust_logpdf(y, p) == doctest::Approx(mvt_logpdf(y, TParams{mu, omega, Dof(4.0)})).epsilon(1e-12));
    }
  }
  const MatrixXd delta = m2(0.9, -0.4, 0.3, 1.2);
  CfustParams sn(VectorXd::Zero(2), m2(1.0, 0.2, 0.2, 0.7), delta, Dof::infinite());
  std::vector<double> worst;
  for (double v : {1e2, 1e4, 1e6}) {
    CfustParams st = sn;
    st.set_nu(Dof(v));
    double w = 0.0;
    for (int k = 0; k < 5; ++k) {
      const VectorXd y = (VectorXd(2) << -1.0 + 0.5 * k, 0.8 - 0.4 * k).finished();
      w = std::max(w, std::fabs(cfust_logpdf(y, st) - cfusn_logpdf(y, sn)));
    }
    worst.push_back(w);
  }
  CHECK(worst[2] < 1e-3);
  CHECK(worst[1] < worst[0]);
  CHECK(worst[2] < worst[1]);
}

TEST_CASE("densities integrate to one") {
  // p = 1, q = 2 skew-normal and p = 1, q = 1 skew-t
  CfustParams a(VectorXd::Constant(1, 0.3), MatrixXd::Constant(1, 1, 0.8), (MatrixXd(1, 2) << 1.1, -0.5).finished(),
                Dof::infinite());
  CHECK(std::fabs(integrate_1d(a, -15, 15, 0.002) - 1) < 1e-4);
  CfustParams b(VectorXd::Constant(1, -1.993), MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 2.1), Dof(5));
  // t_5 tail beyond the window is below 1e-5
  CHECK(std::fabs(integrate_1d(b, -250, 400, 0.005) - 1) < 1e-4);
  CHECK(std::fabs(integrate_2d(scenario_a(Dof::infinite()), -14, 14, 0.04) - 1) < 2e-3);
}

TEST_CASE("moments") {
  for (Dof nu : {Dof(5), Dof(10), Dof::infinite()}) {
    const auto m = cfust_moments(scenario_a(nu));
    CHECK(m.mean.cwiseAbs().maxCoeff() < 1e-12);
  }
  CfustParams sym(VectorXd::Zero(2), m2(1, 0.3, 0.3, 2), MatrixXd::Zero(2, 2), Dof(5));
  CHECK(cfust_moments(sym).variance.isApprox(5.0 / 3.0 * sym.sigma(), 1e-14));
  CfustParams sn(VectorXd::Ones(2), m2(1, 0.3, 0.3, 2), m2(0.5, 0.1, -0.2, 0.9), Dof::infinite());
  const auto m = cfust_moments(sn);
  CHECK(m.mean.isApprox(VectorXd::Ones(2) + std::sqrt(2 / special::kPi) * sn.delta() * VectorXd::Ones(2)));
  CHECK(m.variance.isApprox(sn.sigma() - 2 / special::kPi * sn.delta() * sn.delta().transpose()));
  CHECK(m.kappa1 == 1.0);
  CHECK(m.a_nu == 0.0);
  CHECK_THROWS_AS(cfust_moments(CfustParams(VectorXd::Zero(1), MatrixXd::Identity(1, 1), MatrixXd::Ones(1, 1), Dof(2))),
                  Error);
}

TEST_CASE("sampler agrees with moments and density") {
  const CfustParams p = scenario_a(Dof(10));
  const Eigen::Index n = 1000000;
  const MatrixXd s = cfust_sample(p, n, 17);
  const auto m = cfust_moments(p);
  const VectorXd mean = s.colwise().mean().transpose();
  for (int k = 0; k < 2; ++k) CHECK(std::fabs(mean(k) - m.mean(k)) < 3 * std::sqrt(m.variance(k, k) / double(n)));
  CHECK(cfust_sample(p, 10, 3) == cfust_sample(p, 10, 3));

  CfustParams g(VectorXd::Zero(2), m2(1.0, 0.4, 0.4, 0.6), MatrixXd::Zero(2, 2), Dof::infinite());
  const MatrixXd gs = cfust_sample(g, 400000, 8);
  const MatrixXd c = gs.rowwise() - gs.colwise().mean();
  const MatrixXd cov = c.transpose() * c / double(gs.rows() - 1);
  CHECK(((cov - g.omega()).array() / g.omega().array()).abs().maxCoeff() < 0.02);

  // Kolmogorov-Smirnov distance against the numerically integrated CDF.
  CfustParams u(VectorXd::Constant(1, -1.0), MatrixXd::Constant(1, 1, 0.5), MatrixXd::Constant(1, 1, 1.5), Dof(5));
  MatrixXd us = cfust_sample(u, 100000, 23);
  std::vector<double> xs(us.data(), us.data() + us.size());
  std::sort(xs.begin(), xs.end());
  const double lo = -200.0;
  const double h = 0.002;
  double cdf = 0.0;
  double x = lo;
  // tail below lo for this law is below 1e-6
  double ks = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    while (x + h <= xs[i]) {
      cdf += 0.5 * h * (std::exp(cfust_logpdf(VectorXd::Constant(1, x), u)) +
                        std::exp(cfust_logpdf(VectorXd::Constant(1, x + h), u)));
      x += h;
    }
    const double f = cdf + (xs[i] - x) * std::exp(cfust_logpdf(VectorXd::Constant(1, x), u));
    ks = std::max({ks, std::fabs(f - double(i) / xs.size()), std::fabs(f - double(i + 1) / xs.size())});
  }
  CHECK(ks < 0.01);
}

TEST_CASE("affine transformations") {
  const CfustParams p = scenario_a(Dof(10));
  const CfustParams same = affine_transform(p, MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  CHECK(same.mu() == p.mu());
  CHECK(same.omega() == p.omega());
  CHECK(same.delta() == p.delta());

  const MatrixXd a = m2(1.5, -0.3, 0.4, 0.8);
  const VectorXd c = (VectorXd(2) << 0.2, -1.0).finished();
  const CfustParams t = affine_transform(p, a, c);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 5; ++k) {
    const VectorXd y = test::random_vector(2, rng, 2.0);
    CHECK(cfust_logpdf(VectorXd(a * y + c), t) ==
          doctest::Approx(cfust_logpdf(y, p) - std::log(std::fabs(a.determinant()))).epsilon(1e-10));
  }
  const auto mp = cfust_moments(p);
  const auto mt = cfust_moments(t);
  CHECK(mt.mean.isApprox(a * mp.mean + c, 1e-12));
  CHECK(mt.variance.isApprox(a * mp.variance * a.transpose(), 1e-12));

  const MatrixXd sel = (MatrixXd(1, 2) << 1, 0).finished();
  const CfustParams marg = affine_transform(p, sel, VectorXd::Zero(1));
  const MatrixXd s = cfust_sample(p, 400000, 31);
  const double mean = s.col(0).mean();
  const double var = (s.col(0).array() - mean).square().sum() / double(s.rows() - 1);
  const auto mm = cfust_moments(marg);
  CHECK(std::fabs(mean - mm.mean(0)) < 3 * std::sqrt(mm.variance(0, 0) / double(s.rows())));
  CHECK(var == doctest::Approx(mm.variance(0, 0)).epsilon(0.03));

  CHECK_THROWS_WITH(affine_transform(p, m2(1, 2, 2, 4), VectorXd::Zero(2)), "degenerate transform");
}
