#include "stlmm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stlmm/inference.hpp"
#include "stlmm/parallel.hpp"

namespace stlmm {

namespace {

MatrixXd mat2(double a, double b, double c, double d) { return (MatrixXd(2, 2) << a, b, c, d).finished(); }

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Theta st_truth(VectorXd beta, double sigma2, MatrixXd d, MatrixXd delta, double nu) {
  Theta t;
  t.family = Family::ST;
  t.structure = SkewStructure::Full;
  t.beta = std::move(beta);
  t.sigma2 = sigma2;
  t.D = std::move(d);
  t.Delta = std::move(delta);
  t.nu = Dof(nu);
  return t;
}

// Skewness columns are exchangeable; reorder them to sit closest to the truth.
void align_columns(Theta& est, const Theta& truth) {
  if (est.r() < 2 || est.structure == SkewStructure::Diagonal || truth.Delta.cols() != est.r() ||
      truth.Delta.rows() != est.q())
    return;
  std::vector<int> perm(std::size_t(est.r()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_dist = std::numeric_limits<double>::infinity();
  do {
    double dist = 0.0;
    for (std::size_t j = 0; j < perm.size(); ++j)
      dist += (est.Delta.col(perm[j]) - truth.Delta.col(Eigen::Index(j))).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  MatrixXd d(est.Delta.rows(), est.Delta.cols());
  for (std::size_t j = 0; j < best.size(); ++j) d.col(Eigen::Index(j)) = est.Delta.col(best[j]);
  est.Delta = d;
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"illus-a",     "illus-b",     "illus-c",     "illus-d", "illus-a-nu5", "illus-b-nu5",
          "illus-c-nu5", "illus-d-nu5", "study1",      "study2"};
}

Scenario make_scenario(const std::string& name, std::optional<int> N) {
  Scenario s;
  s.name = name;
  const VectorXd x1 = (VectorXd(5) << -1, -0.5, 0, 0.5, 1).finished();
  const MatrixXd d1 = mat2(0.5, -0.2, -0.2, 0.5);
  if (name == "study1") {
    s.N = 200;
    s.x = x1;
    s.truth = st_truth((VectorXd(2) << 1, 3).finished(), 0.25, d1, mat2(0.6, 1.5, -1.0, 3.0), 5);
    s.note = "Delta in the orientation whose b(5) Delta 1 equals the stated location (-1.993, -1.898)";
  } else if (name == "study2") {
    s.N = 200;
    s.x = (VectorXd(5) << -0.3, -0.15, 0, 0.15, 0.3).finished();
    s.quadratic = true;
    s.truth = st_truth((VectorXd(3) << 2.7, -1, 6.8).finished(), 0.21, mat2(0.1, -0.1, -0.1, 0.5),
                       mat2(1.7, 0.7, 3.9, -0.8), 5);
  } else if (name.rfind("illus-", 0) == 0) {
    const std::string rest = name.substr(6);
    const bool nu5 = rest.size() == 5 && rest.substr(1) == "-nu5";
    if (!(rest.size() == 1 || nu5)) throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + name + "'");
    MatrixXd delta;
    switch (rest[0]) {
      case 'a': delta = mat2(0.6, 1.5, -1.0, 3.0); break;
      case 'b': delta = mat2(1.7, 0.7, 3.9, -0.8); break;
      case 'c': delta = mat2(2.0, 0.0, 0.0, -2.0); break;
      case 'd': delta = mat2(2.0, 0.0, -2.0, 0.0); break;
      default: throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + name + "'");
    }
    s.N = 200;
    s.x = x1;
    s.truth = st_truth((VectorXd(2) << 1, 3).finished(), 0.25, d1, delta, nu5 ? 5 : 10);
    if (rest[0] == 'c') s.truth.structure = SkewStructure::Diagonal;
    s.note = std::string("random-effect law as given with nu = ") + (nu5 ? "5" : "10") +
             "; responses use the study-1 fixed part";
  } else {
    std::ostringstream os;
    os << "unknown scenario '" << name << "'; valid names:";
    for (const auto& n : scenario_names()) os << ' ' << n;
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
  if (N) {
    if (*N < 1) throw Error(ErrorCode::InvalidArgument, "N must be >= 1");
    s.N = *N;
  }
  return s;
}

CfustParams effects_law(const Theta& truth) {
  return CfustParams(truth.location_constant() * truth.Delta.rowwise().sum(), truth.D, truth.Delta, truth.nu);
}

std::uint64_t replica_seed(std::uint64_t base, std::uint64_t k) { return splitmix64(splitmix64(base) + k); }

SimulatedData generate_dataset(const Scenario& scenario, std::uint64_t seed) {
  const Eigen::Index n = scenario.x.size();
  const Theta& t = scenario.truth;
  const Eigen::Index p = t.p();
  const Eigen::Index q = t.q();
  SubjectBlock proto;
  proto.X.resize(n, p);
  proto.X.col(0).setOnes();
  proto.X.col(1) = scenario.x;
  if (scenario.quadratic) proto.X.col(2) = scenario.x.array().square().matrix();
  proto.Z.resize(n, 2);
  proto.Z << VectorXd::Ones(n), scenario.x;
  proto.y = VectorXd::Zero(n);
  // one joint draw of (b_i, eps_i) per subject, sharing the mixing variable
  const MatrixXd draws = cfust_sample(joint_effect_error_law(proto, t), scenario.N, seed);
  std::vector<SubjectBlock> blocks;
  SimulatedData out;
  out.effects.resize(scenario.N, q);
  for (int i = 0; i < scenario.N; ++i) {
    SubjectBlock b = proto;
    b.id = std::to_string(i + 1);
    const VectorXd bi = draws.row(i).head(q).transpose();
    const VectorXd ei = draws.row(i).tail(n).transpose();
    b.y = b.X * t.beta + b.Z * bi + ei;
    blocks.push_back(std::move(b));
    out.effects.row(i) = bi.transpose();
  }
  ColumnInfo cols;
  cols.subject = "subject";
  cols.response = "y";
  cols.fixed = scenario.quadratic ? std::vector<std::string>{"1", "x", "x2"} : std::vector<std::string>{"1", "x"};
  cols.random = {"1", "x"};
  out.data = LongDataset(std::move(blocks), cols);
  out.truth = t;
  return out;
}

McSummary run_monte_carlo(const Scenario& scenario, const McConfig& config) {
  if (config.replicas < 1) throw Error(ErrorCode::InvalidArgument, "replicas must be >= 1");
  McSummary sum;
  sum.requested = config.replicas;
  const Theta& truth = scenario.truth;
  FitConfig fc = config.fit;
  fc.truth = truth;
  fc.random_effects = false;
  fc.compute_se = false;

  struct Replica {
    bool ok = false;
    bool converged = false;
    VectorXd est;
    std::optional<VectorXd> se_l;
    std::optional<VectorXd> se_n;
    std::string message;
    std::string init;
    std::vector<std::string> names;
  };
  std::vector<Replica> reps(std::size_t(config.replicas));
  parallel_for(reps.size(), [&](std::size_t k) {
    Replica& r = reps[k];
    try {
      const SimulatedData sim = generate_dataset(scenario, replica_seed(config.seed, k));
      FitConfig c = fc;
      c.seed = replica_seed(config.seed ^ 0x5bd1e995ULL, k);
      FitResult f = fit(sim.data, c);
      align_columns(f.theta, truth);
      r.names = theta_star_names(f.theta);
      r.est = pack_theta_star(f.theta);
      if (is_heavy_tailed(f.theta.family)) {
        r.est.conservativeResize(r.est.size() + 1);
        r.est(r.est.size() - 1) = f.theta.nu.value();
        r.names.push_back("nu");
      }
      try {
        r.se_l = louis_information(f.theta, sim.data, c.qmc).se;
      } catch (const Error&) {
      }
      if (config.numerical_se) r.se_n = numerical_hessian_se(f.theta, sim.data, 1e-4, c.qmc).se;
      r.converged = f.converged;
      r.init = std::string(to_string(f.init_strategy));
      r.ok = r.est.allFinite();
      if (!r.ok) r.message = "non-finite estimates";
    } catch (const std::exception& e) {
      r.message = e.what();
    }
  });

  std::vector<const Replica*> good;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    if (reps[k].ok) {
      good.push_back(&reps[k]);
    } else {
      sum.failures.push_back("replica " + std::to_string(k) + ": " + reps[k].message);
    }
  }
  sum.fitted = int(good.size());
  if (good.empty()) return sum;
  sum.names = good.front()->names;
  const Eigen::Index k = Eigen::Index(sum.names.size());
  sum.estimates.resize(Eigen::Index(good.size()), k);
  for (std::size_t i = 0; i < good.size(); ++i) {
    sum.estimates.row(Eigen::Index(i)) = good[i]->est.transpose();
    sum.converged += good[i]->converged;
    sum.louis_ok += good[i]->se_l.has_value();
    sum.hessian_ok += good[i]->se_n.has_value();
    sum.init_chosen.push_back(good[i]->init);
  }
  VectorXd true_vec = pack_theta_star(truth);
  if (is_heavy_tailed(config.fit.family)) {
    true_vec.conservativeResize(true_vec.size() + 1);
    true_vec(true_vec.size() - 1) = truth.nu.value();
  }
  const bool same_shape = true_vec.size() == k;
  for (Eigen::Index j = 0; j < k; ++j) {
    McRow row;
    row.parameter = sum.names[std::size_t(j)];
    row.truth = same_shape ? true_vec(j) : std::nan("");
    const VectorXd col = sum.estimates.col(j);
    row.mc_av = col.mean();
    if (col.size() > 1) row.mc_sd = std::sqrt((col.array() - row.mc_av).square().sum() / double(col.size() - 1));
    double sl = 0, sn = 0;
    int nl = 0, nn = 0;
    for (const auto* r : good) {
      if (r->se_l && j < r->se_l->size()) {
        sl += (*r->se_l)(j);
        ++nl;
      }
      if (r->se_n && j < r->se_n->size()) {
        sn += (*r->se_n)(j);
        ++nn;
      }
    }
    if (nl > 0) row.se_l_mean = sl / nl;
    if (nn > 0) row.se_n_mean = sn / nn;
    row.n_ok = sum.fitted;
    sum.rows.push_back(row);
  }
  return sum;
}

MatrixXd contour_grid(const CfustParams& params, const GridSpec& grid) {
  if (params.p() != 2) throw Error(ErrorCode::InvalidArgument, "contour grid needs a bivariate law");
  if (grid.nx < 2 || grid.ny < 2) throw Error(ErrorCode::InvalidArgument, "grid needs at least 2 points per axis");
  MatrixXd out(grid.ny, grid.nx);
  parallel_for(std::size_t(grid.ny), [&](std::size_t i) {
    const double y = grid.y_min + (grid.y_max - grid.y_min) * double(i) / double(grid.ny - 1);
    VectorXd v(2);
    for (int j = 0; j < grid.nx; ++j) {
      v << grid.x_min + (grid.x_max - grid.x_min) * double(j) / double(grid.nx - 1), y;
      out(Eigen::Index(i), j) = std::exp(cfust_logpdf(v, params));
    }
  });
  return out;
}

}  // namespace stlmm
