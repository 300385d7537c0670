#include "stlmm/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "stlmm/parallel.hpp"

namespace stlmm {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::N: return "N";
    case Family::T: return "T";
    case Family::SN: return "SN";
    case Family::ST: return "ST";
  }
  return "?";
}

std::string_view to_string(SkewStructure s) { return s == SkewStructure::Full ? "full" : "diagonal"; }

Family parse_family(std::string_view s) {
  std::string k(s);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (k == "n" || k == "normal") return Family::N;
  if (k == "t" || k == "student-t") return Family::T;
  if (k == "sn" || k == "skew-normal") return Family::SN;
  if (k == "st" || k == "skew-t") return Family::ST;
  throw Error(ErrorCode::InvalidArgument, "unknown family '" + std::string(s) + "' (expected N, T, SN or ST)");
}

SkewStructure parse_structure(std::string_view s) {
  if (s == "full") return SkewStructure::Full;
  if (s == "diagonal" || s == "sdb") return SkewStructure::Diagonal;
  throw Error(ErrorCode::InvalidArgument, "unknown skewness structure '" + std::string(s) + "' (expected full or diagonal)");
}

namespace {

bool parse_number(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

}  // namespace

LongDataset::LongDataset(std::vector<SubjectBlock> subjects, ColumnInfo columns)
    : subjects_(std::move(subjects)), columns_(std::move(columns)) {
  if (subjects_.empty()) throw Error(ErrorCode::InvalidArgument, "dataset has no subjects");
  p_ = subjects_.front().X.cols();
  q_ = subjects_.front().Z.cols();
  std::set<std::string> seen;
  n_obs_ = 0;
  for (const auto& s : subjects_) {
    if (!seen.insert(s.id).second) throw Error(ErrorCode::InvalidArgument, "duplicate subject id '" + s.id + "'");
    if (s.n() < 1) throw Error(ErrorCode::InvalidArgument, "subject '" + s.id + "' has no observations");
    if (s.X.rows() != s.n() || s.Z.rows() != s.n())
      throw Error(ErrorCode::DimensionMismatch, "subject '" + s.id + "': y, X and Z row counts differ");
    if (s.X.cols() != p_ || s.Z.cols() != q_)
      throw Error(ErrorCode::DimensionMismatch, "subject '" + s.id + "': inconsistent design widths");
    if (!s.y.allFinite() || !s.X.allFinite() || !s.Z.allFinite())
      throw Error(ErrorCode::NonFinite, "subject '" + s.id + "': non-finite data");
    n_obs_ += s.n();
  }
  bool numeric = true;
  std::vector<double> keys(subjects_.size());
  for (std::size_t i = 0; i < subjects_.size() && numeric; ++i) numeric = parse_number(subjects_[i].id, keys[i]);
  if (numeric) {
    std::vector<std::size_t> order(subjects_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return keys[a] < keys[b] || (keys[a] == keys[b] && subjects_[a].id < subjects_[b].id);
    });
    std::vector<SubjectBlock> sorted;
    sorted.reserve(subjects_.size());
    for (auto i : order) sorted.push_back(std::move(subjects_[i]));
    subjects_ = std::move(sorted);
  } else {
    std::sort(subjects_.begin(), subjects_.end(),
              [](const SubjectBlock& a, const SubjectBlock& b) { return a.id < b.id; });
  }
}

void Theta::validate() const {
  const Eigen::Index qq = q();
  if (!beta.allFinite()) throw Error(ErrorCode::NonFinite, "beta not finite");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be > 0");
  if (D.cols() != qq) throw Error(ErrorCode::DimensionMismatch, "D must be square");
  if (!D.allFinite() || !Delta.allFinite()) throw Error(ErrorCode::NonFinite, "D or Delta not finite");
  if (!is_symmetric(D)) throw Error(ErrorCode::InvalidArgument, "D not symmetric");
  if (qq > 0) checked_llt(D, "D");
  if (Delta.rows() != qq) throw Error(ErrorCode::DimensionMismatch, "Delta must have q rows");
  if (r() > kMaxTruncRank) throw Error(ErrorCode::UnsupportedRank, "unsupported skewness rank");
  switch (family) {
    case Family::N:
      if (r() != 0 || nu.is_finite()) throw Error(ErrorCode::InvalidArgument, "family N needs Delta = 0 and nu = inf");
      break;
    case Family::T:
      if (r() != 0 || nu.is_infinite()) throw Error(ErrorCode::InvalidArgument, "family T needs Delta = 0 and finite nu");
      break;
    case Family::SN:
      if (nu.is_finite()) throw Error(ErrorCode::InvalidArgument, "family SN needs nu = inf");
      break;
    case Family::ST:
      if (nu.is_infinite()) throw Error(ErrorCode::InvalidArgument, "family ST needs finite nu");
      if (nu.value() <= 1.0) throw Error(ErrorCode::InvalidArgument, "family ST needs nu > 1");
      break;
  }
  if (structure == SkewStructure::Diagonal) {
    if (r() != qq) throw Error(ErrorCode::InvalidArgument, "diagonal skewness needs r = q");
    for (Eigen::Index i = 0; i < qq; ++i)
      for (Eigen::Index j = 0; j < qq; ++j)
        if (i != j && Delta(i, j) != 0.0) throw Error(ErrorCode::InvalidArgument, "diagonal skewness with off-diagonal Delta");
  }
}

double Theta::location_constant() const { return r() > 0 ? b_constant(nu) : 0.0; }

SubjectGeometry subject_geometry(const SubjectBlock& block, const Theta& theta) {
  if (block.X.cols() != theta.p() || block.Z.cols() != theta.q())
    throw Error(ErrorCode::DimensionMismatch, "design widths do not match theta");
  SubjectGeometry g;
  g.zdelta = block.Z * theta.Delta;
  VectorXd mu = block.X * theta.beta;
  if (theta.r() > 0) mu += theta.location_constant() * g.zdelta.rowwise().sum();
  MatrixXd sigma = block.Z * theta.D * block.Z.transpose() + g.zdelta * g.zdelta.transpose();
  sigma.diagonal().array() += theta.sigma2;
  g.sigma_llt = checked_llt(sigma, "Sigma_i");
  g.log_det = log_det(g.sigma_llt);
  g.resid = block.y - mu;
  const VectorXd sinv_r = g.sigma_llt.solve(g.resid);
  g.d = g.resid.dot(sinv_r);
  g.qvec = g.zdelta.transpose() * sinv_r;
  g.lambda = symmetrized(MatrixXd(MatrixXd::Identity(theta.r(), theta.r()) -
                                  g.zdelta.transpose() * g.sigma_llt.solve(g.zdelta)));
  return g;
}

double subject_marginal_logpdf(const SubjectBlock& block, const Theta& theta, const QmcConfig& qmc) {
  const SubjectGeometry g = subject_geometry(block, theta);
  const Eigen::Index n = block.n();
  double out = mvt_log_density(g.d, n, g.log_det, theta.nu);
  if (theta.r() > 0) {
    const Eigen::Index r = theta.r();
    double prob;
    if (theta.nu.is_infinite()) {
      prob = mvt_cdf(g.qvec, g.lambda, theta.nu, qmc);
    } else {
      const double v = theta.nu.value();
      prob = mvt_cdf(VectorXd(g.qvec * std::sqrt((v + double(n)) / (v + g.d))), g.lambda, theta.nu.plus(double(n)), qmc);
    }
    out += double(r) * std::log(2.0) + std::log(prob);
  }
  return out;
}

CfustParams joint_effect_error_law(const SubjectBlock& block, const Theta& theta) {
  const Eigen::Index q = theta.q();
  const Eigen::Index n = block.n();
  const Eigen::Index r = theta.r();
  VectorXd loc = VectorXd::Zero(q + n);
  if (r > 0) loc.head(q) = theta.location_constant() * theta.Delta.rowwise().sum();
  MatrixXd omega = MatrixXd::Zero(q + n, q + n);
  omega.topLeftCorner(q, q) = theta.D;
  omega.bottomRightCorner(n, n).diagonal().setConstant(theta.sigma2);
  MatrixXd delta = MatrixXd::Zero(q + n, r);
  delta.topRows(q) = theta.Delta;
  return CfustParams(loc, omega, delta, theta.nu);
}

double subject_marginal_logpdf_joint(const SubjectBlock& block, const Theta& theta, const QmcConfig& qmc) {
  const Eigen::Index q = theta.q();
  const Eigen::Index n = block.n();
  MatrixXd a(n, q + n);
  a << block.Z, MatrixXd::Identity(n, n);
  const CfustParams marginal = affine_transform(joint_effect_error_law(block, theta), a, block.X * theta.beta);
  return cfust_logpdf(block.y, marginal, qmc);
}

void rethrow_for_subject(const std::string& id) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), "subject " + id + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::SubjectFailure, "subject " + id + ": " + e.what());
  }
}

VectorXd subject_logliks(const Theta& theta, const LongDataset& data, const QmcConfig& qmc) {
  theta.validate();
  VectorXd out(Eigen::Index(data.size()));
  parallel_for(data.size(), [&](std::size_t i) {
    try {
      out(Eigen::Index(i)) = subject_marginal_logpdf(data[i], theta, qmc);
    } catch (...) {
      rethrow_for_subject(data[i].id);
    }
  });
  return out;
}

double loglik(const Theta& theta, const LongDataset& data, const QmcConfig& qmc) {
  const VectorXd terms = subject_logliks(theta, data, qmc);
  double total = 0.0;
  for (Eigen::Index i = 0; i < terms.size(); ++i) total += terms(i);
  return total;
}

}  // namespace stlmm
