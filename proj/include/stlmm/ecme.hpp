#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stlmm/model.hpp"

namespace stlmm {

/// Conditional expectations of (U, S, b) given y_i for one subject.
struct EStepMoments {
  double u_hat = 1;
  VectorXd us_hat;   // E[U S]
  MatrixXd us2_hat;  // E[U S S^T]
  VectorXd ub_hat;   // E[U b]
  MatrixXd ubs_hat;  // E[U b S^T]
  MatrixXd ub2_hat;  // E[U b b^T]
  VectorXd q;        // Delta^T Z^T Sigma^{-1} (y - mu)
  VectorXd r;        // b Delta 1 + M Z^T (y - mu) / sigma2
  MatrixXd M;        // (D^{-1} + Z^T Z / sigma2)^{-1}
  double d = 0;
};

EStepMoments e_step(const Theta& theta, const SubjectBlock& block, const QmcConfig& qmc = {});
/// All subjects, in dataset order; failures carry the subject id.
std::vector<EStepMoments> e_step(const Theta& theta, const LongDataset& data, const QmcConfig& qmc = {});

struct BetaSigma2 {
  VectorXd beta;
  double sigma2;
};
BetaSigma2 cm_update_beta_sigma2(const LongDataset& data, const std::vector<EStepMoments>& moments);

/// Conditional expectation of U (b - Delta(b 1 + S))(b - Delta(b 1 + S))^T,
/// symmetrized; the D update averages these over subjects.
MatrixXd k1_matrix(const Theta& theta, const EStepMoments& m);

struct DDelta {
  MatrixXd D;
  MatrixXd Delta;
};
/// D from the symmetrized K matrices at the current (Delta, b); Delta from the
/// closed-form normal equations (re-solved on the diagonal for SDB).
DDelta cm_update_D_Delta(const Theta& theta, const std::vector<EStepMoments>& moments, bool update_delta = true);

/// log-likelihood as a function of nu alone with theta* held fixed. The
/// per-subject quantities that depend on nu only through b(nu) are cached.
class NuProfile {
 public:
  NuProfile(const Theta& theta_star, const LongDataset& data, const QmcConfig& qmc = {});
  double operator()(const Dof& nu) const;

 private:
  struct Cache {
    double a0, a1, a2;  // d(b) = a0 - 2 b a1 + b^2 a2
    VectorXd q0, q1;    // q(b) = q0 - b q1
    MatrixXd lambda;
    double log_det;
    Eigen::Index n;
  };
  std::vector<Cache> cache_;
  Eigen::Index r_;
  QmcConfig qmc_;
};

struct NuUpdate {
  int nu;
  double loglik;
  int evaluations;
};
/// Exact argmax of the profile over the grid (ties go to the smaller nu),
/// found by scanning outward from `start` until three consecutive decreases
/// on each side, or exhaustively.
NuUpdate update_nu(const NuProfile& profile, const std::vector<int>& grid, int start, bool exhaustive = false);

enum class InitStrategy { TrueValues, NormalGrid, SnWarmStart, Hybrid, BestOf };
std::string_view to_string(InitStrategy s);
InitStrategy parse_init_strategy(std::string_view s);

struct FitConfig {
  Family family = Family::ST;
  Eigen::Index rank = 2;  // r; ignored for N and T
  SkewStructure structure = SkewStructure::Full;
  double tolerance = 1e-6;
  int max_iter = 500;
  std::vector<int> nu_grid = default_nu_grid();
  InitStrategy init = InitStrategy::BestOf;
  std::uint64_t seed = 1;
  std::optional<Theta> truth;    // required by InitStrategy::TrueValues
  std::optional<Theta> start;    // explicit starting value, overrides init
  bool fix_delta = false;        // keep Delta at its starting value
  bool fix_nu = false;           // keep nu at its starting value
  bool compute_se = true;        // Louis standard errors
  bool random_effects = true;
  int sn_warm_iter = 100;
  QmcConfig qmc;

  static std::vector<int> default_nu_grid();
};

struct CandidateFit {
  InitStrategy strategy;
  double loglik;
  int n_iter;
  bool converged;
};

struct FitResult {
  Theta theta;
  std::vector<double> loglik_trace;
  int n_iter = 0;
  bool converged = false;
  double loglik = 0;
  int npar = 0;
  double aic = 0;
  std::optional<VectorXd> se;          // Louis SEs for theta*, empty if unavailable
  std::vector<VectorXd> random_effects;  // dataset order
  InitStrategy init_strategy = InitStrategy::NormalGrid;
  std::vector<CandidateFit> candidates;  // filled by BestOf
  std::string message;                   // diagnostic when stopped early
};

/// Starting value for one strategy (BestOf is resolved inside fit()).
Theta initialize(InitStrategy strategy, const LongDataset& data, const FitConfig& config);

/// Gaussian LMM by the same EM machinery, from OLS and moment estimates.
Theta fit_normal_lmm(const LongDataset& data, double tolerance = 1e-8, int max_iter = 2000);

/// Coordinate scan of Delta over multiples of sqrt(D_jj) at fixed (beta, sigma2, D, nu).
Theta scan_delta_grid(Theta theta, const LongDataset& data, const QmcConfig& qmc = {});

/// ECME iterations from `start` with no initialization logic.
FitResult run_ecme(const Theta& start, const LongDataset& data, const FitConfig& config);

FitResult fit(const LongDataset& data, const FitConfig& config);

/// Free parameters: p + 1 + q(q+1)/2 + free Delta entries + (1 if nu estimated).
int npar(const Theta& theta, bool delta_free = true, bool nu_free = true);
double aic(double loglik, int npar);

}  // namespace stlmm
