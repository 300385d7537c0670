#include "stlmm/inference.hpp"

#include <algorithm>

#include <Eigen/Eigenvalues>

#include "stlmm/parallel.hpp"

namespace stlmm {

VectorXd estimate_random_effects(const Theta& theta, const SubjectBlock& block, const QmcConfig& qmc) {
  const SubjectGeometry g = subject_geometry(block, theta);
  const MatrixXd dinv = checked_llt(theta.D, "D").solve(MatrixXd::Identity(theta.q(), theta.q()));
  const MatrixXd m = checked_llt(dinv + block.Z.transpose() * block.Z / theta.sigma2, "M_i")
                         .solve(MatrixXd::Identity(theta.q(), theta.q()));
  VectorXd out = m * (block.Z.transpose() * g.resid) / theta.sigma2;
  if (theta.r() == 0) return out;
  out += theta.location_constant() * theta.Delta.rowwise().sum();
  TruncTSpec w;
  w.mu = g.qvec;
  if (theta.nu.is_infinite()) {
    w.sigma = g.lambda;
  } else {
    const double v = theta.nu.value();
    const double nd = double(block.n());
    w.sigma = (v + g.d) / (v + nd) * g.lambda;
    w.nu = Dof(v + nd);
  }
  out += m * dinv * theta.Delta * trunc_t_mean(w, qmc).mean;
  return out;
}

std::vector<VectorXd> estimate_random_effects(const Theta& theta, const LongDataset& data, const QmcConfig& qmc) {
  theta.validate();
  std::vector<VectorXd> out(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    try {
      out[i] = estimate_random_effects(theta, data[i], qmc);
    } catch (...) {
      rethrow_for_subject(data[i].id);
    }
  });
  return out;
}

VectorXd ScoreVector::stacked() const {
  VectorXd out(beta.size() + 1 + alpha.size() + delta.size());
  out << beta, sigma2, alpha, delta;
  return out;
}

namespace {

VectorXd free_delta(const Theta& theta, const MatrixXd& full) {
  if (theta.r() == 0) return VectorXd(0);
  if (theta.structure == SkewStructure::Diagonal) return full.diagonal();
  return full.reshaped();
}

}  // namespace

ScoreVector louis_score(const Theta& theta, const SubjectBlock& block, const EStepMoments& m) {
  ScoreVector s;
  const double s2 = theta.sigma2;
  const VectorXd e = block.y - block.X * theta.beta;
  const VectorXd zub = block.Z * m.ub_hat;
  s.beta = block.X.transpose() * (m.u_hat * e - zub) / s2;
  const double tr = (block.Z * m.ub2_hat).cwiseProduct(block.Z).sum();
  s.sigma2 = -double(block.n()) / (2.0 * s2) + (m.u_hat * e.squaredNorm() - 2.0 * e.dot(zub) + tr) / (2.0 * s2 * s2);
  const Eigen::Index q = theta.q();
  const MatrixXd dinv = checked_llt(theta.D, "D").solve(MatrixXd::Identity(q, q));
  s.alpha = upper_tri(MatrixXd(-0.5 * dinv + 0.5 * dinv * k1_matrix(theta, m) * dinv));
  const Eigen::Index r = theta.r();
  if (r > 0) {
    const double b = theta.location_constant();
    const VectorXd one = VectorXd::Ones(r);
    const MatrixXd lhs = b * m.ub_hat * one.transpose() + m.ubs_hat;
    const MatrixXd rhs = m.us2_hat + m.u_hat * b * b * one * one.transpose() +
                         b * (one * m.us_hat.transpose() + m.us_hat * one.transpose());
    s.delta = free_delta(theta, MatrixXd(dinv * lhs - dinv * theta.Delta * rhs));
  } else {
    s.delta = VectorXd(0);
  }
  return s;
}

std::vector<std::string> theta_star_names(const Theta& theta) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < theta.p(); ++i) names.push_back("beta" + std::to_string(i));
  names.push_back("sigma2");
  for (Eigen::Index j = 0; j < theta.q(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i) names.push_back("D" + std::to_string(i + 1) + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < theta.r(); ++j)
    for (Eigen::Index i = 0; i < theta.q(); ++i)
      if (theta.structure == SkewStructure::Full || i == j)
        names.push_back("Delta" + std::to_string(i + 1) + std::to_string(j + 1));
  return names;
}

VectorXd pack_theta_star(const Theta& theta) {
  const VectorXd alpha = upper_tri(theta.D);
  const VectorXd delta = free_delta(theta, theta.Delta);
  VectorXd out(theta.p() + 1 + alpha.size() + delta.size());
  out << theta.beta, theta.sigma2, alpha, delta;
  return out;
}

Theta unpack_theta_star(const VectorXd& x, const Theta& like) {
  Theta t = like;
  const Eigen::Index p = like.p();
  const Eigen::Index q = like.q();
  const Eigen::Index na = q * (q + 1) / 2;
  const VectorXd want = pack_theta_star(like);
  if (x.size() != want.size()) throw Error(ErrorCode::DimensionMismatch, "theta* has the wrong length");
  t.beta = x.head(p);
  t.sigma2 = x(p);
  t.D = from_upper_tri(x.segment(p + 1, na), q);
  const VectorXd d = x.tail(x.size() - p - 1 - na);
  if (like.r() > 0) {
    if (like.structure == SkewStructure::Diagonal) {
      t.Delta = MatrixXd(d.asDiagonal());
    } else {
      t.Delta = d.reshaped(q, like.r());
    }
  }
  return t;
}

LouisResult louis_information(const Theta& theta, const LongDataset& data, const QmcConfig& qmc) {
  const auto moments = e_step(theta, data, qmc);
  const Eigen::Index k = pack_theta_star(theta).size();
  LouisResult out;
  out.information = MatrixXd::Zero(k, k);
  out.score_sum = VectorXd::Zero(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const VectorXd s = louis_score(theta, data[i], moments[i]).stacked();
    out.information.noalias() += s * s.transpose();
    out.score_sum += s;
  }
  out.information = symmetrized(out.information);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(out.information);
  const VectorXd ev = es.eigenvalues();
  if (ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff())) {
    const MatrixXd inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    out.se = inv.diagonal().cwiseSqrt();
  }
  return out;
}

MatrixXd numerical_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x, const VectorXd& steps) {
  const Eigen::Index k = x.size();
  MatrixXd h(k, k);
  const double f0 = f(x);
  auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    VectorXd y = x;
    y(i) += si * steps(i);
    y(j) += sj * steps(j);
    return f(y);
  };
  for (Eigen::Index i = 0; i < k; ++i) {
    VectorXd up = x, dn = x;
    up(i) += steps(i);
    dn(i) -= steps(i);
    h(i, i) = (f(up) - 2.0 * f0 + f(dn)) / (steps(i) * steps(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      h(i, j) = h(j, i) = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) /
                          (4.0 * steps(i) * steps(j));
    }
  }
  return h;
}

HessianSe numerical_hessian_se(const Theta& theta, const LongDataset& data, double step_rel, const QmcConfig& qmc) {
  HessianSe out;
  const VectorXd x = pack_theta_star(theta);
  VectorXd steps(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) steps(i) = step_rel * std::max(1.0, std::fabs(x(i)));
  try {
    out.hessian = numerical_hessian([&](const VectorXd& v) { return loglik(unpack_theta_star(v, theta), data, qmc); },
                                    x, steps);
  } catch (const Error& e) {
    out.message = std::string("Hessian evaluation failed: ") + e.what();
    return out;
  }
  if (!out.hessian.allFinite()) {
    out.message = "Hessian not finite";
    return out;
  }
  const MatrixXd neg = -symmetrized(out.hessian);
  Eigen::LLT<MatrixXd> llt(neg);
  if (llt.info() != Eigen::Success) {
    out.message = "Hessian not negative definite";
    return out;
  }
  out.se = llt.solve(MatrixXd::Identity(x.size(), x.size())).diagonal().cwiseSqrt();
  return out;
}

std::vector<SelectionRow> model_select(const LongDataset& data,
                                       const std::vector<std::pair<std::string, FitConfig>>& candidates) {
  std::vector<SelectionRow> rows;
  for (const auto& [label, config] : candidates) {
    FitConfig c = config;
    c.compute_se = false;
    c.random_effects = false;
    const FitResult r = fit(data, c);
    rows.push_back({label, c.family, r.theta.r(), c.structure, r.npar, r.loglik, r.aic, r.converged});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SelectionRow& a, const SelectionRow& b) { return a.aic < b.aic; });
  return rows;
}

}  // namespace stlmm
