#include "stlmm/trunc_moments.hpp"

#include <random>
#include <vector>

namespace stlmm {

namespace {

// Moments of Y ~ t_r(0, S, nu) over {Y >= c}, not normalized.
struct Tail {
  double mass = 0;
  VectorXd first;  // E[Y 1{Y >= c}]
  VectorXd h;      // S^{-1} first
};

// Y restricted to the face {Y_j = c_j}: the remaining coordinates are
// m + V with V ~ t_{r-1}(0, scale, dof), and the face carries `weight`.
struct Face {
  double weight = 0;
  std::vector<Eigen::Index> others;
  VectorXd m;
  MatrixXd scale;
  Dof dof = Dof::infinite();
};

Face make_face(const VectorXd& c, const MatrixXd& s, const Dof& nu, Eigen::Index j) {
  const Eigen::Index r = c.size();
  Face f;
  const double sjj = s(j, j);
  const double delta = c(j) * c(j) / sjj;
  const double kappa = nu.is_infinite() ? 1.0 : (nu.value() + delta) / (nu.value() - 1.0);
  const double sd = std::sqrt(sjj);
  f.weight = kappa * special::student_t_pdf(c(j) / sd, nu.value()) / sd;
  for (Eigen::Index k = 0; k < r; ++k)
    if (k != j) f.others.push_back(k);
  const auto o = Eigen::Index(f.others.size());
  f.m.resize(o);
  f.scale.resize(o, o);
  for (Eigen::Index a = 0; a < o; ++a) {
    f.m(a) = s(f.others[a], j) * c(j) / sjj;
    for (Eigen::Index b = 0; b < o; ++b)
      f.scale(a, b) = kappa * (s(f.others[a], f.others[b]) - s(f.others[a], j) * s(j, f.others[b]) / sjj);
  }
  f.dof = nu.plus(-1.0);
  return f;
}

VectorXd pick(const VectorXd& v, const std::vector<Eigen::Index>& idx) {
  VectorXd out(Eigen::Index(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out(Eigen::Index(a)) = v(idx[a]);
  return out;
}

double face_mass(const Face& f, const VectorXd& c, const QmcConfig& qmc) {
  if (f.others.empty()) return 1.0;
  return mvt_cdf(f.m - pick(c, f.others), f.scale, f.dof, qmc);
}

Tail tail_first(const VectorXd& c, const MatrixXd& s, const Dof& nu, const QmcConfig& qmc) {
  const Eigen::Index r = c.size();
  Tail t;
  t.mass = mvt_cdf(-c, s, nu, qmc);
  t.h.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) {
    const Face f = make_face(c, s, nu, j);
    t.h(j) = f.weight * face_mass(f, c, qmc);
  }
  t.first = s * t.h;
  return t;
}

void check_spec(const TruncTSpec& spec) {
  const Eigen::Index r = spec.mu.size();
  if (spec.sigma.rows() != r || spec.sigma.cols() != r)
    throw Error(ErrorCode::DimensionMismatch, "truncated t: sigma must be r x r");
  if (r > kMaxTruncRank) throw Error(ErrorCode::UnsupportedRank, "unsupported skewness rank");
  if (!spec.mu.allFinite() || !spec.sigma.allFinite())
    throw Error(ErrorCode::NonFinite, "truncated t: non-finite parameters");
  checked_llt(spec.sigma);
}

TruncMoments finish(const TruncTSpec& spec, const Tail& t) {
  TruncMoments out;
  out.mass = t.mass;
  out.mean = spec.mu + t.first / t.mass;
  return out;
}

}  // namespace

TruncMoments trunc_t_mean(const TruncTSpec& spec, const QmcConfig& qmc) {
  check_spec(spec);
  const Eigen::Index r = spec.mu.size();
  if (r == 0) return {VectorXd(0), MatrixXd(0, 0), 1.0};
  if (spec.nu.is_finite() && spec.nu.value() <= 1.0)
    throw Error(ErrorCode::MomentUndefined, "first moment undefined");
  const VectorXd c = -spec.mu;
  const Tail t = tail_first(c, spec.sigma, spec.nu, qmc);
  if (!(t.mass > 1e-12)) throw Error(ErrorCode::NegligibleMass, "truncation region has negligible probability");
  TruncMoments out = finish(spec, t);
  out.second = out.mean * out.mean.transpose();
  return out;
}

TruncMoments trunc_t_mean_and_second_moment(const TruncTSpec& spec, const QmcConfig& qmc) {
  check_spec(spec);
  const Eigen::Index r = spec.mu.size();
  if (r == 0) return {VectorXd(0), MatrixXd(0, 0), 1.0};
  const Dof& nu = spec.nu;
  if (nu.is_finite() && nu.value() <= 2.0) throw Error(ErrorCode::MomentUndefined, "second moment undefined");
  const MatrixXd& s = spec.sigma;
  const VectorXd c = -spec.mu;

  const Tail t = tail_first(c, s, nu, qmc);
  if (!(t.mass > 1e-12)) throw Error(ErrorCode::NegligibleMass, "truncation region has negligible probability");

  // Integration by parts turns E[Y (S^{-1}Y)^T 1] into a bulk term and one
  // face integral per coordinate.
  double bulk = t.mass;
  if (nu.is_finite()) {
    const double v = nu.value();
    bulk = v / (v - 2.0) * mvt_cdf(-c, s * (v / (v - 2.0)), nu.plus(-2.0), qmc);
  }
  MatrixXd h = MatrixXd::Zero(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    h(j, j) = c(j) * t.h(j);
    if (r == 1) continue;
    const Face f = make_face(c, s, nu, j);
    const Tail v = tail_first(pick(c, f.others) - f.m, f.scale, f.dof, qmc);
    for (std::size_t a = 0; a < f.others.size(); ++a) {
      const auto ai = Eigen::Index(a);
      h(j, f.others[a]) = f.weight * (f.m(ai) * v.mass + v.first(ai));
    }
  }
  const MatrixXd raw = symmetrized(MatrixXd(s * (bulk * MatrixXd::Identity(r, r) + h)));

  TruncMoments out = finish(spec, t);
  const VectorXd m1 = t.first / t.mass;
  out.second = spec.mu * spec.mu.transpose() + spec.mu * m1.transpose() + m1 * spec.mu.transpose() + raw / t.mass;
  out.second = symmetrized(out.second);
  return out;
}

OracleMoments rejection_oracle(const TruncTSpec& spec, Eigen::Index n, std::uint64_t seed) {
  if (n < 1000) throw Error(ErrorCode::InvalidArgument, "rejection oracle needs at least 1000 draws");
  const Eigen::Index r = spec.mu.size();
  if (spec.sigma.rows() != r || spec.sigma.cols() != r)
    throw Error(ErrorCode::DimensionMismatch, "truncated t: sigma must be r x r");
  const MatrixXd l = checked_llt(spec.sigma).matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::gamma_distribution<double> gamma(spec.nu.is_finite() ? spec.nu.value() / 2.0 : 1.0,
                                        spec.nu.is_finite() ? 2.0 / spec.nu.value() : 1.0);
  VectorXd sum = VectorXd::Zero(r);
  MatrixXd sum2 = MatrixXd::Zero(r, r);
  Eigen::Index kept = 0;
  VectorXd z(r);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < r; ++k) z(k) = n01(rng);
    const double scale = spec.nu.is_finite() ? 1.0 / std::sqrt(gamma(rng)) : 1.0;
    const VectorXd w = spec.mu + scale * (l * z);
    if ((w.array() >= 0.0).all()) {
      sum += w;
      sum2.noalias() += w * w.transpose();
      ++kept;
    }
  }
  if (kept < 100) throw Error(ErrorCode::InsufficientAcceptance, "insufficient acceptance");
  OracleMoments out;
  out.mean = sum / double(kept);
  out.second = sum2 / double(kept);
  out.acceptance = double(kept) / double(n);
  out.accepted = kept;
  return out;
}

}  // namespace stlmm
