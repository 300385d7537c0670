#include <initializer_list>
#include <cmath>
#include <set>

#include "doctest.h"
#include "stlmm/simulation.hpp"

using namespace stlmm;

TEST_CASE("scenario catalogue") {
  for (const auto& name : scenario_names()) {
    const Scenario s = make_scenario(name);
    CHECK(s.N == 200);
    CHECK_NOTHROW(s.truth.validate());
    CHECK(s.truth.nu.value() == (name == "study1" || name == "study2" || name.find("nu5") != std::string::npos ? 5 : 10));
  }
  CHECK(make_scenario("study1", 600).N == 600);
  CHECK_THROWS_WITH(make_scenario("study3"), doctest::Contains("valid names"));
  CHECK_THROWS_AS(make_scenario("study1", 0), Error);

  // the stated random-effect locations
  const VectorXd loc1 = effects_law(make_scenario("study1").truth).mu();
  CHECK(loc1(0) == doctest::Approx(-1.993).epsilon(5e-4));
  CHECK(loc1(1) == doctest::Approx(-1.898).epsilon(5e-4));
  const VectorXd loc2 = effects_law(make_scenario("study2").truth).mu();
  CHECK(loc2(0) == doctest::Approx(-2.278).epsilon(5e-4));
  CHECK(loc2(1) == doctest::Approx(-2.942).epsilon(5e-4));
}

TEST_CASE("generated data") {
  const Scenario s = make_scenario("study2", 4000);
  const auto a = generate_dataset(s, 17);
  const auto b = generate_dataset(s, 17);
  REQUIRE(a.data.size() == 4000);
  CHECK(a.data.p() == 3);
  CHECK(a.data[0].X(1, 2) == doctest::Approx(0.15 * 0.15));
  CHECK(a.data[10].y == b.data[10].y);
  CHECK(generate_dataset(s, 18).data[10].y != a.data[10].y);
  // centred random effects
  const VectorXd mean = a.effects.colwise().mean();
  const VectorXd sd = ((a.effects.rowwise() - mean.transpose()).array().square().colwise().sum() / 3999.0).sqrt();
  for (int j = 0; j < 2; ++j) CHECK(std::fabs(mean(j)) < 4.0 * sd(j) / std::sqrt(4000.0));

  std::set<std::uint64_t> seeds;
  for (std::uint64_t k = 0; k < 1000; ++k) seeds.insert(replica_seed(1, k));
  CHECK(seeds.size() == 1000);
}

TEST_CASE("density grid") {
  const CfustParams law = effects_law(make_scenario("illus-a").truth);
  GridSpec g{-12, 18, -12, 18, 301, 301};
  const MatrixXd dens = contour_grid(law, g);
  REQUIRE(dens.rows() == 301);
  const double cell = (30.0 / 300) * (30.0 / 300);
  CHECK(dens.sum() * cell == doctest::Approx(1.0).epsilon(2e-3));

  const CfustParams sym((VectorXd(2) << 0.5, -0.5).finished(), make_scenario("illus-a").truth.D, MatrixXd::Zero(2, 2),
                        Dof(10));
  const MatrixXd ds = contour_grid(sym, GridSpec{-3.5, 4.5, -4.5, 3.5, 41, 41});
  CHECK((ds - ds.reverse()).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(contour_grid(law, GridSpec{-1, 1, -1, 1, 1, 5}), Error);
}

TEST_CASE("Monte Carlo summary") {
  McConfig mc;
  mc.replicas = 2;
  mc.fit.init = InitStrategy::NormalGrid;
  mc.fit.max_iter = 60;
  const McSummary s = run_monte_carlo(make_scenario("study1", 60), mc);
  CHECK(s.requested == 2);
  CHECK(s.fitted + int(s.failures.size()) == 2);
  REQUIRE(s.fitted > 0);
  CHECK(s.names.back() == "nu");
  CHECK(s.rows.size() == s.names.size());
  CHECK(s.rows[0].truth == 1.0);
  CHECK(s.estimates.rows() == s.fitted);

  mc.replicas = 1;
  const McSummary one = run_monte_carlo(make_scenario("study1", 60), mc);
  if (one.fitted == 1) CHECK_FALSE(one.rows[0].mc_sd.has_value());
}

TEST_CASE("Monte Carlo summary is reproducible") {
  McConfig mc;
  mc.replicas = 3;
  mc.fit.init = InitStrategy::NormalGrid;
  mc.fit.max_iter = 40;
  const Scenario s = make_scenario("study1", 40);
  const McSummary a = run_monte_carlo(s, mc);
  const McSummary b = run_monte_carlo(s, mc);
  REQUIRE(a.estimates.rows() == b.estimates.rows());
  CHECK(a.estimates == b.estimates);
  mc.seed += 1;
  CHECK(run_monte_carlo(s, mc).estimates != a.estimates);
}
