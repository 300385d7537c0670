#include <initializer_list>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "stlmm/io.hpp"

using namespace stlmm;

namespace {

LongDataset parse(const std::string& text, const ColumnInfo& cols) {
  std::istringstream in(text);
  return parse_long_csv(in, cols);
}

const ColumnInfo kBasic{"subject", "y", {"1", "x"}, {"1", "x"}};

}  // namespace

TEST_CASE("long CSV ingestion") {
  const std::string text =
      "subject,y,x\n"
      "b,1.5,0\n"
      "a,2.0,0\n"
      "b,1.0,2\n"
      "a,3.5,1\n"
      "b,0.5,1\n"
      "a,4.0,2\n";
  const LongDataset d = parse(text, kBasic);
  REQUIRE(d.size() == 2);
  CHECK(d.p() == 2);
  CHECK(d.q() == 2);
  CHECK(d[0].id == "a");
  CHECK(d[0].n() == 3);
  // file order kept inside a subject
  CHECK(d[1].y == (VectorXd(3) << 1.5, 1.0, 0.5).finished());
  CHECK(d[1].X.col(1) == (VectorXd(3) << 0, 2, 1).finished());
  CHECK(d[1].Z.col(0) == VectorXd::Ones(3));
}

TEST_CASE("ingestion errors") {
  CHECK_THROWS_WITH(parse("subject,y,x\n1,,0\n1,2,1\n", kBasic), doctest::Contains("row 2"));
  CHECK_THROWS_WITH(parse("subject,y,x\n1,1,0\n1,NA,1\n", kBasic), doctest::Contains("row 3, column 'y': missing"));
  CHECK_THROWS_WITH(parse("subject,y,x\n1,1,0\n1,2,abc\n", kBasic), doctest::Contains("non-numeric value 'abc'"));
  CHECK_THROWS_WITH(parse("subject,y,z\n1,1,0\n", kBasic), doctest::Contains("unknown column 'x'"));
  CHECK_THROWS_WITH(parse("subject,y,x\n1,1\n", kBasic), doctest::Contains("fields"));
  CHECK_THROWS_AS(parse("", kBasic), Error);
  CHECK_THROWS_AS(read_long_csv("/nonexistent/file.csv", kBasic), Error);
}

TEST_CASE("schizophrenia-shaped design") {
  // two subjects, raw week and score plus caller-derived columns
  std::ostringstream csv;
  csv << "subject,week,bprs,nt,y,t,t2,nt_t\n";
  const int weeks[] = {0, 1, 2, 3, 4, 6};
  const double scores[2][6] = {{52, 47, 41, 40, 36, 30}, {61, 60, 55, 49, 50, 44}};
  for (int s = 0; s < 2; ++s) {
    const int nt = s;
    for (int k = 0; k < 6; ++k) {
      const double t = (weeks[k] - 3) / 10.0;
      csv << s + 1 << ',' << weeks[k] << ',' << scores[s][k] << ',' << nt << ',' << format_number(scores[s][k] / 10)
          << ',' << format_number(t) << ',' << format_number(t * t) << ',' << format_number(nt * t) << '\n';
    }
  }
  const ColumnInfo cols{"subject", "y", {"1", "t", "t2", "nt", "nt_t"}, {"1", "t"}};
  const LongDataset d = parse(csv.str(), cols);
  REQUIRE(d.size() == 2);
  CHECK(d.p() == 5);
  CHECK(d.q() == 2);
  for (int s = 0; s < 2; ++s) {
    MatrixXd x(6, 5), z(6, 2);
    VectorXd y(6);
    for (int k = 0; k < 6; ++k) {
      const double t = (weeks[k] - 3) / 10.0;
      x.row(k) << 1, t, t * t, s, s * t;
      z.row(k) << 1, t;
      y(k) = scores[s][k] / 10;
    }
    CHECK((d[std::size_t(s)].X - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d[std::size_t(s)].Z - z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((d[std::size_t(s)].y - y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("written data read back unchanged") {
  const auto sim = generate_dataset(make_scenario("study2", 12), 3);
  const LongDataset back = parse(long_csv(sim.data), sim.data.columns());
  REQUIRE(back.size() == sim.data.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == sim.data[i].id);
    CHECK(back[i].y == sim.data[i].y);
    CHECK(back[i].X == sim.data[i].X);
    CHECK(back[i].Z == sim.data[i].Z);
  }
}

TEST_CASE("reports and tables") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);

  Theta t = make_scenario("study1").truth;
  const Json j = theta_json(t);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys.size() == 11);
  CHECK(keys.back() == "nu");
  t.family = Family::SN;
  t.nu = Dof::infinite();
  CHECK_FALSE(theta_json(t).contains("nu"));

  McSummary s;
  s.rows.push_back({"beta0", 1.0, 0.99, std::nullopt, 0.1, std::nullopt, 1});
  CHECK(mc_summary_csv(s) == "parameter,true,mc_av,mc_sd,se_l_mean,se_n_mean,n_ok\nbeta0,1,0.99,,0.1,,1\n");

  const GridSpec g{0, 1, 0, 1, 3, 2};
  const std::string dc = density_csv(MatrixXd::Constant(2, 3, 0.5), g);
  CHECK(dc == "0,0.5,1\n0.5,0.5,0.5\n0.5,0.5,0.5\n");
}

TEST_CASE("atomic writes") {
  const auto dir = std::filesystem::temp_directory_path() / "stlmm_io_test";
  std::filesystem::create_directories(dir);
  const auto f = dir / "out.txt";
  write_atomic(f, "first\n");
  write_atomic(f, "second\n");
  std::ifstream in(f);
  std::string s;
  std::getline(in, s);
  CHECK(s == "second");
  CHECK_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  CHECK_THROWS_AS(write_atomic(dir / "missing" / "x.txt", "x"), Error);
  std::filesystem::remove_all(dir);
}
