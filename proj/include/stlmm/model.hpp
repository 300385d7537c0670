#pragma once

#include <string>
#include <vector>

#include "stlmm/cfust.hpp"
#include "stlmm/trunc_moments.hpp"

namespace stlmm {

enum class Family { N, T, SN, ST };
enum class SkewStructure { Full, Diagonal };

std::string_view to_string(Family f);
std::string_view to_string(SkewStructure s);
Family parse_family(std::string_view s);
SkewStructure parse_structure(std::string_view s);

inline bool is_skewed(Family f) { return f == Family::SN || f == Family::ST; }
inline bool is_heavy_tailed(Family f) { return f == Family::T || f == Family::ST; }

struct SubjectBlock {
  std::string id;
  VectorXd y;
  MatrixXd X;
  MatrixXd Z;

  Eigen::Index n() const { return y.size(); }
};

struct ColumnInfo {
  std::string subject;
  std::string response;
  std::vector<std::string> fixed;
  std::vector<std::string> random;
};

/// Subjects ordered by id (numerically when every id is a number), which
/// fixes the summation order of every per-subject reduction.
class LongDataset {
 public:
  LongDataset() = default;
  explicit LongDataset(std::vector<SubjectBlock> subjects, ColumnInfo columns = {});

  const std::vector<SubjectBlock>& subjects() const { return subjects_; }
  const SubjectBlock& operator[](std::size_t i) const { return subjects_[i]; }
  std::size_t size() const { return subjects_.size(); }
  Eigen::Index p() const { return p_; }
  Eigen::Index q() const { return q_; }
  Eigen::Index n_obs() const { return n_obs_; }
  const ColumnInfo& columns() const { return columns_; }

 private:
  std::vector<SubjectBlock> subjects_;
  ColumnInfo columns_;
  Eigen::Index p_ = 0;
  Eigen::Index q_ = 0;
  Eigen::Index n_obs_ = 0;
};

/// theta = (beta, sigma2, D, Delta, nu). Families without skewness carry a
/// q x 0 Delta; Gaussian families carry an infinite nu.
struct Theta {
  VectorXd beta;
  double sigma2 = 1.0;
  MatrixXd D;
  MatrixXd Delta;
  Dof nu = Dof::infinite();
  Family family = Family::ST;
  SkewStructure structure = SkewStructure::Full;

  Eigen::Index p() const { return beta.size(); }
  Eigen::Index q() const { return D.rows(); }
  Eigen::Index r() const { return Delta.cols(); }

  /// Throws InvalidArgument / DimensionMismatch / NotPositiveDefinite.
  void validate() const;
  /// b(nu) for skewed families, 0 otherwise.
  double location_constant() const;
};

/// Per-subject pieces of the marginal law Y_i ~ ST_{n_i,r}(mu_i, Psi_i, Z_i Delta, nu).
struct SubjectGeometry {
  VectorXd resid;        // y - mu_i
  MatrixXd zdelta;       // Z_i Delta
  Eigen::LLT<MatrixXd> sigma_llt;  // Sigma_i = Psi_i + Z Delta Delta^T Z^T
  MatrixXd lambda;       // I - Delta^T Z^T Sigma_i^{-1} Z Delta
  VectorXd qvec;         // Delta^T Z^T Sigma_i^{-1} (y - mu_i)
  double d = 0;          // Mahalanobis distance
  double log_det = 0;    // log|Sigma_i|
};

SubjectGeometry subject_geometry(const SubjectBlock& block, const Theta& theta);

/// log f(y_i | theta) from the marginal density formula.
double subject_marginal_logpdf(const SubjectBlock& block, const Theta& theta, const QmcConfig& qmc = {});
/// Same quantity through affine_transform of the joint (b_i, eps_i) law.
double subject_marginal_logpdf_joint(const SubjectBlock& block, const Theta& theta, const QmcConfig& qmc = {});
/// The joint (b_i, eps_i) law itself.
CfustParams joint_effect_error_law(const SubjectBlock& block, const Theta& theta);

/// Sum over subjects in dataset order; failures are rethrown with the subject id.
double loglik(const Theta& theta, const LongDataset& data, const QmcConfig& qmc = {});
/// Per-subject terms in dataset order.
VectorXd subject_logliks(const Theta& theta, const LongDataset& data, const QmcConfig& qmc = {});

/// Rethrows the active exception with the subject id prefixed.
[[noreturn]] void rethrow_for_subject(const std::string& id);

}  // namespace stlmm
