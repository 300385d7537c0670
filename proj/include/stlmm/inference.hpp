#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stlmm/ecme.hpp"

namespace stlmm {

/// E[b_i | y_i] at theta.
VectorXd estimate_random_effects(const Theta& theta, const SubjectBlock& block, const QmcConfig& qmc = {});
std::vector<VectorXd> estimate_random_effects(const Theta& theta, const LongDataset& data, const QmcConfig& qmc = {});

/// Per-subject score blocks of theta* = theta without nu.
struct ScoreVector {
  VectorXd beta;
  double sigma2 = 0;
  VectorXd alpha;  // upper triangle of D, column by column
  VectorXd delta;  // free entries of Delta, column by column

  VectorXd stacked() const;
};

ScoreVector louis_score(const Theta& theta, const SubjectBlock& block, const EStepMoments& m);

/// Names of the theta* coordinates in stacking order: beta0.., sigma2,
/// D11, D12, D22.., Delta11, Delta21, ...
std::vector<std::string> theta_star_names(const Theta& theta);
VectorXd pack_theta_star(const Theta& theta);
Theta unpack_theta_star(const VectorXd& x, const Theta& like);

struct LouisResult {
  MatrixXd information;
  std::optional<VectorXd> se;  // empty when the information is singular
  VectorXd score_sum;
};
LouisResult louis_information(const Theta& theta, const LongDataset& data, const QmcConfig& qmc = {});

/// Central-difference Hessian with per-coordinate steps.
MatrixXd numerical_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x, const VectorXd& steps);

struct HessianSe {
  std::optional<VectorXd> se;
  MatrixXd hessian;
  std::string message;
};
/// SEs from the inverse negative Hessian of the marginal log-likelihood in
/// theta*, steps step_rel * max(1, |theta_j|).
HessianSe numerical_hessian_se(const Theta& theta, const LongDataset& data, double step_rel = 1e-4,
                               const QmcConfig& qmc = {});

struct SelectionRow {
  std::string label;
  Family family;
  Eigen::Index rank;
  SkewStructure structure;
  int npar;
  double loglik;
  double aic;
  bool converged;
};
/// Fits every candidate and ranks by ascending AIC.
std::vector<SelectionRow> model_select(const LongDataset& data,
                                       const std::vector<std::pair<std::string, FitConfig>>& candidates);

}  // namespace stlmm
