#include "stlmm/ecme.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>

#include <Eigen/Eigenvalues>

#include "stlmm/inference.hpp"
#include "stlmm/parallel.hpp"
#include "stlmm/special.hpp"

namespace stlmm {

namespace {

MatrixXd inverse_spd(const MatrixXd& a, const char* what) {
  return checked_llt(a, what).solve(MatrixXd::Identity(a.rows(), a.cols()));
}

double min_eigenvalue(const MatrixXd& a) {
  if (a.size() == 0) return 1.0;
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

EStepMoments e_step(const Theta& theta, const SubjectBlock& block, const QmcConfig& qmc) {
  const SubjectGeometry g = subject_geometry(block, theta);
  const Eigen::Index n = block.n();
  const Eigen::Index r = theta.r();
  EStepMoments m;
  m.d = g.d;
  m.q = g.qvec;
  const MatrixXd dinv = inverse_spd(theta.D, "D");
  m.M = symmetrized(inverse_spd(dinv + block.Z.transpose() * block.Z / theta.sigma2, "M_i"));
  m.r = m.M * (block.Z.transpose() * g.resid) / theta.sigma2;
  if (r > 0) m.r += theta.location_constant() * theta.Delta.rowwise().sum();

  TruncTSpec w;
  w.mu = g.qvec;
  if (theta.nu.is_infinite()) {
    m.u_hat = 1.0;
    w.sigma = g.lambda;
    w.nu = Dof::infinite();
  } else {
    const double v = theta.nu.value();
    const double nd = double(n);
    m.u_hat = (v + nd) / (v + g.d);
    if (r > 0) {
      const double num = mvt_cdf(VectorXd(g.qvec * std::sqrt((v + nd + 2) / (v + g.d))), g.lambda, Dof(v + nd + 2), qmc);
      const double den = mvt_cdf(VectorXd(g.qvec * std::sqrt((v + nd) / (v + g.d))), g.lambda, Dof(v + nd), qmc);
      if (!(den > 0.0)) throw Error(ErrorCode::NegligibleMass, "truncation region has negligible probability");
      m.u_hat *= num / den;
    }
    w.sigma = (v + g.d) / (v + nd + 2) * g.lambda;
    w.nu = Dof(v + nd + 2);
  }
  if (r > 0) {
    const TruncMoments tm = trunc_t_mean_and_second_moment(w, qmc);
    m.us_hat = m.u_hat * tm.mean;
    m.us2_hat = m.u_hat * tm.second;
  } else {
    m.us_hat = VectorXd(0);
    m.us2_hat = MatrixXd(0, 0);
  }
  const MatrixXd mdd = m.M * dinv * theta.Delta;
  m.ub_hat = m.u_hat * m.r + mdd * m.us_hat;
  m.ubs_hat = m.r * m.us_hat.transpose() + mdd * m.us2_hat;
  m.ub2_hat = symmetrized(MatrixXd(m.M + m.ub_hat * m.r.transpose() + m.ubs_hat * mdd.transpose()));
  if (!std::isfinite(m.u_hat) || !m.ub2_hat.allFinite() || !m.us2_hat.allFinite())
    throw Error(ErrorCode::NonFinite, "non-finite conditional moments");
  return m;
}

std::vector<EStepMoments> e_step(const Theta& theta, const LongDataset& data, const QmcConfig& qmc) {
  std::vector<EStepMoments> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    try {
      out[i] = e_step(theta, data[i], qmc);
    } catch (...) {
      rethrow_for_subject(data[i].id);
    }
  });
  return out;
}

BetaSigma2 cm_update_beta_sigma2(const LongDataset& data, const std::vector<EStepMoments>& moments) {
  const Eigen::Index p = data.p();
  MatrixXd a = MatrixXd::Zero(p, p);
  VectorXd rhs = VectorXd::Zero(p);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    const auto& m = moments[i];
    a.noalias() += m.u_hat * s.X.transpose() * s.X;
    rhs.noalias() += s.X.transpose() * (m.u_hat * s.y - s.Z * m.ub_hat);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
  if (p > 0 && !(es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())))
    throw Error(ErrorCode::RankDeficientDesign, "rank-deficient fixed-effects design");
  BetaSigma2 out;
  out.beta = a.llt().solve(rhs);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    const auto& m = moments[i];
    const VectorXd e = s.y - s.X * out.beta;
    const double tr = (s.Z * m.ub2_hat).cwiseProduct(s.Z).sum();
    total += m.u_hat * e.squaredNorm() - 2.0 * e.dot(s.Z * m.ub_hat) + tr;
  }
  out.sigma2 = total / double(data.n_obs());
  if (!(out.sigma2 > 0.0)) throw Error(ErrorCode::NonFinite, "sigma2 update not positive");
  return out;
}

MatrixXd k1_matrix(const Theta& theta, const EStepMoments& m) {
  if (theta.r() == 0) return m.ub2_hat;
  const double b = theta.location_constant();
  const MatrixXd& delta = theta.Delta;
  const VectorXd c = delta.rowwise().sum();
  const MatrixXd dubs = delta * m.ubs_hat.transpose();
  const VectorXd dus = delta * m.us_hat;
  MatrixXd k = m.ub2_hat - dubs - dubs.transpose() - b * (m.ub_hat * c.transpose() + c * m.ub_hat.transpose()) +
               b * (c * dus.transpose() + dus * c.transpose()) + delta * m.us2_hat * delta.transpose() +
               m.u_hat * b * b * c * c.transpose();
  return symmetrized(k);
}

DDelta cm_update_D_Delta(const Theta& theta, const std::vector<EStepMoments>& moments, bool update_delta) {
  const Eigen::Index q = theta.q();
  const Eigen::Index r = theta.r();
  const double b = theta.location_constant();
  MatrixXd dsum = MatrixXd::Zero(q, q);
  MatrixXd bsum = MatrixXd::Zero(q, r);
  MatrixXd asum = MatrixXd::Zero(r, r);
  const VectorXd one = VectorXd::Ones(r);
  for (const auto& m : moments) {
    dsum += k1_matrix(theta, m);
    if (r > 0) {
      bsum += b * m.ub_hat * one.transpose() + m.ubs_hat;
      asum += m.us2_hat + m.u_hat * b * b * one * one.transpose() +
              b * (one * m.us_hat.transpose() + m.us_hat * one.transpose());
    }
  }
  DDelta out;
  out.D = symmetrized(MatrixXd(dsum / double(moments.size())));
  if (q > 0 && min_eigenvalue(out.D) < 1e-8 * out.D.trace() / double(q)) out.D = project_spd(out.D);
  out.Delta = theta.Delta;
  if (r == 0 || !update_delta) return out;
  asum = symmetrized(asum);
  if (theta.structure == SkewStructure::Diagonal) {
    const MatrixXd dinv = inverse_spd(out.D, "D");
    const MatrixXd h = dinv.cwiseProduct(asum);
    const VectorXd g = (dinv * bsum).diagonal();
    Eigen::LLT<MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::DegenerateSkewness, "skewness update degenerate");
    out.Delta = MatrixXd(llt.solve(g).asDiagonal());
  } else {
    Eigen::LLT<MatrixXd> llt(asum);
    if (llt.info() != Eigen::Success || min_eigenvalue(asum) <= 1e-14 * asum.trace())
      throw Error(ErrorCode::DegenerateSkewness, "skewness update degenerate");
    out.Delta = llt.solve(bsum.transpose()).transpose();
  }
  if (!out.Delta.allFinite()) throw Error(ErrorCode::DegenerateSkewness, "skewness update degenerate");
  return out;
}

NuProfile::NuProfile(const Theta& theta_star, const LongDataset& data, const QmcConfig& qmc)
    : cache_(data.size()), r_(theta_star.r()), qmc_(qmc) {
  parallel_for(data.size(), [&](std::size_t i) {
    try {
      const auto& s = data[i];
      const MatrixXd a = s.Z * theta_star.Delta;
      MatrixXd sigma = s.Z * theta_star.D * s.Z.transpose() + a * a.transpose();
      sigma.diagonal().array() += theta_star.sigma2;
      const auto llt = checked_llt(sigma, "Sigma_i");
      const VectorXd r0 = s.y - s.X * theta_star.beta;
      const VectorXd g = a.rowwise().sum();
      const VectorXd s0 = llt.solve(r0);
      const VectorXd s1 = llt.solve(g);
      Cache& c = cache_[i];
      c.a0 = r0.dot(s0);
      c.a1 = g.dot(s0);
      c.a2 = g.dot(s1);
      c.q0 = a.transpose() * s0;
      c.q1 = a.transpose() * s1;
      c.lambda = symmetrized(MatrixXd(MatrixXd::Identity(r_, r_) - a.transpose() * llt.solve(a)));
      c.log_det = log_det(llt);
      c.n = s.n();
    } catch (...) {
      rethrow_for_subject(data[i].id);
    }
  });
}

double NuProfile::operator()(const Dof& nu) const {
  const double b = r_ > 0 ? b_constant(nu) : 0.0;
  std::vector<double> terms(cache_.size());
  parallel_for(cache_.size(), [&](std::size_t i) {
    const Cache& c = cache_[i];
    const double d = c.a0 - 2.0 * b * c.a1 + b * b * c.a2;
    double t = mvt_log_density(d, c.n, c.log_det, nu);
    if (r_ > 0) {
      const VectorXd q = c.q0 - b * c.q1;
      const double nd = double(c.n);
      const double prob = nu.is_infinite()
                              ? mvt_cdf(q, c.lambda, nu, qmc_)
                              : mvt_cdf(VectorXd(q * std::sqrt((nu.value() + nd) / (nu.value() + d))), c.lambda,
                                        nu.plus(nd), qmc_);
      t += double(r_) * std::log(2.0) + std::log(prob);
    }
    terms[i] = t;
  });
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

NuUpdate update_nu(const NuProfile& profile, const std::vector<int>& grid_in, int start, bool exhaustive) {
  if (grid_in.empty()) throw Error(ErrorCode::InvalidArgument, "nu grid is empty");
  std::vector<int> grid = grid_in;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const auto k = grid.size();
  std::vector<double> value(k, 0.0);
  std::vector<bool> done(k, false);
  int evaluations = 0;
  auto eval = [&](std::size_t i) {
    if (!done[i]) {
      double v;
      try {
        v = profile(Dof(double(grid[i])));
      } catch (const Error&) {
        v = -std::numeric_limits<double>::infinity();
      }
      value[i] = std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
      done[i] = true;
      ++evaluations;
    }
    return value[i];
  };
  if (exhaustive) {
    for (std::size_t i = 0; i < k; ++i) eval(i);
  } else {
    std::size_t s = 0;
    for (std::size_t i = 1; i < k; ++i)
      if (std::abs(grid[i] - start) < std::abs(grid[s] - start)) s = i;
    double prev = eval(s);
    int drops = 0;
    for (std::size_t i = s + 1; i < k && drops < 3; ++i) {
      const double v = eval(i);
      drops = v < prev ? drops + 1 : 0;
      prev = v;
    }
    prev = value[s];
    drops = 0;
    for (std::size_t i = s; i-- > 0 && drops < 3;) {
      const double v = eval(i);
      drops = v < prev ? drops + 1 : 0;
      prev = v;
    }
  }
  std::size_t best = k;
  for (std::size_t i = 0; i < k; ++i)
    if (done[i] && (best == k || value[i] > value[best])) best = i;
  return {grid[best], value[best], evaluations};
}

std::string_view to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::TrueValues: return "true-values";
    case InitStrategy::NormalGrid: return "normal-plus-grid";
    case InitStrategy::SnWarmStart: return "sn-warmstart";
    case InitStrategy::Hybrid: return "hybrid";
    case InitStrategy::BestOf: return "best-of";
  }
  return "?";
}

InitStrategy parse_init_strategy(std::string_view s) {
  std::string k(s);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (k == "a" || k == "true-values") return InitStrategy::TrueValues;
  if (k == "b" || k == "normal-plus-grid") return InitStrategy::NormalGrid;
  if (k == "c" || k == "sn-warmstart") return InitStrategy::SnWarmStart;
  if (k == "d" || k == "hybrid") return InitStrategy::Hybrid;
  if (k == "e" || k == "best-of") return InitStrategy::BestOf;
  throw Error(ErrorCode::InvalidArgument,
              "unknown init strategy '" + std::string(s) +
                  "' (expected true-values, normal-plus-grid, sn-warmstart, hybrid or best-of)");
}

std::vector<int> FitConfig::default_nu_grid() {
  std::vector<int> g;
  for (int v = 2; v <= 100; ++v) g.push_back(v);
  return g;
}

int npar(const Theta& theta, bool delta_free, bool nu_free) {
  const auto q = int(theta.q());
  int k = int(theta.p()) + 1 + q * (q + 1) / 2;
  if (delta_free && theta.r() > 0) k += theta.structure == SkewStructure::Diagonal ? q : q * int(theta.r());
  if (nu_free && is_heavy_tailed(theta.family)) k += 1;
  return k;
}

double aic(double loglik, int npar) { return 2.0 * npar - 2.0 * loglik; }

namespace {

// OLS for beta, per-subject least squares of the residuals on Z for D.
Theta moment_start(const LongDataset& data) {
  const Eigen::Index p = data.p();
  const Eigen::Index q = data.q();
  MatrixXd xtx = MatrixXd::Zero(p, p);
  VectorXd xty = VectorXd::Zero(p);
  for (const auto& s : data.subjects()) {
    xtx += s.X.transpose() * s.X;
    xty += s.X.transpose() * s.y;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(xtx, Eigen::EigenvaluesOnly);
  if (p > 0 && !(es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())))
    throw Error(ErrorCode::RankDeficientDesign, "rank-deficient fixed-effects design");
  Theta t;
  t.family = Family::N;
  t.beta = xtx.llt().solve(xty);
  t.Delta = MatrixXd(q, 0);
  double ss_total = 0.0, ss_within = 0.0;
  Eigen::Index dof_within = 0;
  MatrixXd bb = MatrixXd::Zero(q, q);
  int used = 0;
  for (const auto& s : data.subjects()) {
    const VectorXd e = s.y - s.X * t.beta;
    ss_total += e.squaredNorm();
    if (s.n() > q && q > 0) {
      const MatrixXd ztz = s.Z.transpose() * s.Z;
      Eigen::LDLT<MatrixXd> ldlt(ztz);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && std::fabs(ztz.determinant()) > 1e-10) {
        const VectorXd bi = ldlt.solve(s.Z.transpose() * e);
        bb += bi * bi.transpose();
        ss_within += (e - s.Z * bi).squaredNorm();
        dof_within += s.n() - q;
        ++used;
      }
    }
  }
  const double var_total = ss_total / double(std::max<Eigen::Index>(1, data.n_obs() - p));
  t.sigma2 = dof_within > 0 ? ss_within / double(dof_within) : 0.5 * var_total;
  if (!(t.sigma2 > 1e-6 * var_total)) t.sigma2 = std::max(1e-6 * var_total, 1e-12);
  if (used > 0) {
    t.D = bb / double(used);
    // least-squares coefficients carry sampling noise of order sigma2 (Z^T Z)^{-1}
    t.D = project_spd(symmetrized(t.D), 1e-3);
  } else {
    t.D = MatrixXd::Identity(q, q) * 0.5 * var_total;
  }
  if (q > 0 && min_eigenvalue(t.D) <= 0.0) t.D = MatrixXd::Identity(q, q) * 0.5 * var_total;
  t.nu = Dof::infinite();
  return t;
}

FitConfig inner_config(const FitConfig& base, Family family, int max_iter, double tolerance) {
  FitConfig c = base;
  c.family = family;
  c.max_iter = max_iter;
  c.tolerance = tolerance;
  c.compute_se = false;
  c.random_effects = false;
  c.start.reset();
  c.fix_delta = false;
  c.fix_nu = false;
  return c;
}

Eigen::Index effective_rank(const FitConfig& config, Eigen::Index q) {
  if (!is_skewed(config.family)) return 0;
  if (config.structure == SkewStructure::Diagonal) return q;
  return config.rank;
}

// Lazily shared pieces of strategies (b), (c) and (d).
class StartBuilder {
 public:
  StartBuilder(const LongDataset& data, const FitConfig& config) : data_(data), config_(config) {}

  const Theta& normal() {
    if (!normal_) normal_ = fit_normal_lmm(data_);
    return *normal_;
  }

  Theta normal_grid(Family family) {
    Theta t = normal();
    t.family = family;
    t.structure = config_.structure;
    t.Delta = MatrixXd::Zero(t.q(), effective_rank(config_, t.q()));
    t.nu = is_heavy_tailed(family) ? Dof(10) : Dof::infinite();
    if (is_skewed(family)) t = scan_delta_grid(t, data_, config_.qmc);
    return t;
  }

  const Theta& sn_fit() {
    if (!sn_) {
      const Theta start = normal_grid(Family::SN);
      const FitConfig c = inner_config(config_, Family::SN, config_.sn_warm_iter, config_.tolerance);
      sn_ = run_ecme(start, data_, c).theta;
    }
    return *sn_;
  }

  Theta build(InitStrategy s) {
    const Family f = config_.family;
    if (f == Family::N) return normal();
    if (!is_skewed(f) || f == Family::SN) {
      if (s == InitStrategy::TrueValues) return true_values();
      return normal_grid(f);
    }
    switch (s) {
      case InitStrategy::TrueValues: return true_values();
      case InitStrategy::NormalGrid: return normal_grid(f);
      case InitStrategy::SnWarmStart: {
        Theta t = sn_fit();
        t.family = f;
        t.nu = Dof(10);
        return t;
      }
      case InitStrategy::Hybrid: {
        Theta t = sn_fit();
        t.family = f;
        t.nu = Dof(10);
        t.beta = normal().beta;
        t.sigma2 = normal().sigma2;
        return t;
      }
      case InitStrategy::BestOf: break;
    }
    throw Error(ErrorCode::InvalidArgument, "best-of has no single starting value");
  }

 private:
  Theta true_values() {
    if (!config_.truth) throw Error(ErrorCode::InvalidArgument, "true-values initialization needs the true parameters");
    Theta t = *config_.truth;
    std::mt19937_64 rng(config_.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> z(0.0, 0.05);
    auto jitter = [&](double v) { return v + z(rng) * std::max(std::fabs(v), 0.1); };
    for (Eigen::Index i = 0; i < t.beta.size(); ++i) t.beta(i) = jitter(t.beta(i));
    t.sigma2 = std::fabs(jitter(t.sigma2));
    for (Eigen::Index j = 0; j < t.D.cols(); ++j)
      for (Eigen::Index i = 0; i <= j; ++i) t.D(i, j) = t.D(j, i) = jitter(t.D(i, j));
    if (min_eigenvalue(t.D) <= 0.0) t.D = project_spd(t.D, 1e-3);
    for (Eigen::Index i = 0; i < t.Delta.size(); ++i)
      if (t.Delta(i) != 0.0) t.Delta(i) = jitter(t.Delta(i));
    t.family = config_.family;
    t.nu = is_heavy_tailed(t.family) ? Dof(10) : Dof::infinite();
    return t;
  }

  const LongDataset& data_;
  const FitConfig& config_;
  std::optional<Theta> normal_;
  std::optional<Theta> sn_;
};

void check_config(const FitConfig& c) {
  if (!(c.tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be > 0");
  if (c.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_iter must be >= 1");
  if (c.nu_grid.empty()) throw Error(ErrorCode::InvalidArgument, "nu grid is empty");
  for (int v : c.nu_grid)
    if (v < 2) throw Error(ErrorCode::InvalidArgument, "nu grid values must be integers > 1");
  if (is_skewed(c.family) && c.structure == SkewStructure::Full && (c.rank < 1 || c.rank > kMaxTruncRank))
    throw Error(ErrorCode::UnsupportedRank, "unsupported skewness rank");
}

void finalize(FitResult& res, const LongDataset& data, const FitConfig& config) {
  res.loglik = res.loglik_trace.back();
  res.npar = npar(res.theta, !config.fix_delta, !config.fix_nu);
  res.aic = aic(res.loglik, res.npar);
  if (config.compute_se) {
    try {
      res.se = louis_information(res.theta, data, config.qmc).se;
    } catch (const Error&) {
      res.se.reset();
    }
  }
  if (config.random_effects) {
    try {
      res.random_effects = estimate_random_effects(res.theta, data, config.qmc);
    } catch (const Error& e) {
      if (res.message.empty()) res.message = std::string("random effects unavailable: ") + e.what();
    }
  }
}

}  // namespace

Theta fit_normal_lmm(const LongDataset& data, double tolerance, int max_iter) {
  FitConfig c;
  c.family = Family::N;
  c.tolerance = tolerance;
  c.max_iter = max_iter;
  c.compute_se = false;
  c.random_effects = false;
  return run_ecme(moment_start(data), data, c).theta;
}

namespace {

// Equal skewness columns form an invariant set of the EM map.
bool duplicates_column(const Theta& theta, Eigen::Index j) {
  if (theta.Delta.col(j).isZero(0.0)) return false;
  for (Eigen::Index k = 0; k < theta.r(); ++k)
    if (k != j && theta.Delta.col(k) == theta.Delta.col(j)) return true;
  return false;
}

}  // namespace

Theta scan_delta_grid(Theta theta, const LongDataset& data, const QmcConfig& qmc) {
  static constexpr double kMultipliers[] = {-1.5, -0.75, 0.0, 0.75, 1.5};
  const MatrixXd d_hat = theta.D;
  const double sigma2_hat = theta.sigma2;
  const Eigen::Index q = theta.q();
  const double a = theta.nu.is_infinite() ? 1.0 : theta.nu.value() / (theta.nu.value() - 2.0);
  const double k1 = kappa1(theta.nu);
  const double c_skew = a * (1.0 - 2.0 / special::kPi);
  const double c_sum = (2.0 / special::kPi) * (a - k1 * k1);
  // D and sigma2 follow each candidate so that the marginal covariance stays at the normal fit
  auto matched = [&](Theta& t) {
    const VectorXd s = t.Delta.rowwise().sum();
    const MatrixXd d = (d_hat - c_skew * t.Delta * t.Delta.transpose() - c_sum * s * s.transpose()) / a;
    if (min_eigenvalue(d) <= 1e-3 * d.trace() / double(q)) return false;
    t.D = symmetrized(d);
    t.sigma2 = sigma2_hat / a;
    return true;
  };
  if (!matched(theta)) throw Error(ErrorCode::NotPositiveDefinite, "covariance not positive definite");
  double best = loglik(theta, data, qmc);
  if (!std::isfinite(best)) best = -std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < theta.r(); ++j) {
      for (Eigen::Index i = 0; i < q; ++i) {
        if (theta.structure == SkewStructure::Diagonal && i != j) continue;
        const double scale = std::sqrt(d_hat(i, i));
        Theta chosen = theta;
        for (double mult : kMultipliers) {
          Theta cand = chosen;
          cand.Delta(i, j) = mult * scale;
          if (cand.Delta(i, j) == chosen.Delta(i, j) || duplicates_column(cand, j) || !matched(cand)) continue;
          double ll;
          try {
            ll = loglik(cand, data, qmc);
          } catch (const Error&) {
            continue;
          }
          if (std::isfinite(ll) && ll > best) {
            best = ll;
            theta = cand;
          }
        }
      }
    }
  }
  return theta;
}

Theta initialize(InitStrategy strategy, const LongDataset& data, const FitConfig& config) {
  check_config(config);
  StartBuilder b(data, config);
  return b.build(strategy);
}

FitResult run_ecme(const Theta& start, const LongDataset& data, const FitConfig& config) {
  check_config(config);
  Theta theta = start;
  theta.validate();
  FitResult res;
  double ll = loglik(theta, data, config.qmc);
  if (!std::isfinite(ll)) throw Error(ErrorCode::NonFinite, "log-likelihood not finite at the starting value");
  res.loglik_trace.push_back(ll);
  const bool estimate_nu = is_heavy_tailed(theta.family) && !config.fix_nu;
  for (int it = 1; it <= config.max_iter; ++it) {
    Theta next = theta;
    double ll_new;
    try {
      const auto moments = e_step(theta, data, config.qmc);
      const BetaSigma2 bs = cm_update_beta_sigma2(data, moments);
      const DDelta dd = cm_update_D_Delta(theta, moments, !config.fix_delta);
      next.beta = bs.beta;
      next.sigma2 = bs.sigma2;
      next.D = dd.D;
      next.Delta = dd.Delta;
      if (estimate_nu) {
        const NuProfile profile(next, data, config.qmc);
        const NuUpdate nu = update_nu(profile, config.nu_grid, int(std::lround(theta.nu.value())));
        next.nu = Dof(double(nu.nu));
        ll_new = nu.loglik;
      } else {
        ll_new = loglik(next, data, config.qmc);
      }
    } catch (const Error& e) {
      res.message = "stopped at iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    if (!std::isfinite(ll_new)) {
      res.message = "stopped at iteration " + std::to_string(it) + ": non-finite log-likelihood";
      break;
    }
    theta = next;
    res.loglik_trace.push_back(ll_new);
    res.n_iter = it;
    const bool small = std::fabs(ll_new / ll - 1.0) < config.tolerance || std::fabs(ll_new - ll) < 1e-10;
    ll = ll_new;
    if (small) {
      res.converged = true;
      break;
    }
  }
  res.theta = theta;
  res.loglik = res.loglik_trace.back();
  return res;
}

FitResult fit(const LongDataset& data, const FitConfig& config) {
  check_config(config);
  FitResult res;
  if (config.start) {
    res = run_ecme(*config.start, data, config);
    res.init_strategy = config.init;
  } else if (config.init == InitStrategy::BestOf && config.family == Family::ST) {
    StartBuilder builder(data, config);
    bool have = false;
    for (InitStrategy s : {InitStrategy::NormalGrid, InitStrategy::SnWarmStart, InitStrategy::Hybrid}) {
      FitResult r;
      try {
        r = run_ecme(builder.build(s), data, config);
      } catch (const Error& e) {
        if (!have) res.message = e.what();
        continue;
      }
      res.candidates.push_back({s, r.loglik, r.n_iter, r.converged});
      if (!have || r.loglik > res.loglik) {
        auto cands = std::move(res.candidates);
        res = std::move(r);
        res.candidates = std::move(cands);
        res.init_strategy = s;
        have = true;
      }
    }
    if (!have) throw Error(ErrorCode::NonFinite, "every starting strategy failed: " + res.message);
  } else {
    const InitStrategy s = config.init == InitStrategy::BestOf ? InitStrategy::NormalGrid : config.init;
    StartBuilder builder(data, config);
    res = run_ecme(builder.build(s), data, config);
    res.init_strategy = s;
  }
  finalize(res, data, config);
  return res;
}

}  // namespace stlmm
