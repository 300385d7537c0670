#pragma once

#include <cstdint>

#include "stlmm/mvdist.hpp"

namespace stlmm {

/// t_r(mu, sigma, nu) restricted to the positive orthant.
struct TruncTSpec {
  VectorXd mu;
  MatrixXd sigma;
  Dof nu = Dof::infinite();
};

struct TruncMoments {
  VectorXd mean;    // E[W]
  MatrixXd second;  // E[W W^T]
  double mass = 0;  // P(T >= 0) before truncation
};

/// Largest rank the closed-form recursion accepts.
inline constexpr Eigen::Index kMaxTruncRank = 4;

/// Exact first and second moments, obtained by conditioning on one coordinate
/// at a time; every remaining integral is a centered t (or normal) CDF.
TruncMoments trunc_t_mean_and_second_moment(const TruncTSpec& spec, const QmcConfig& qmc = {});

/// Mass and first moment only; requires nu > 1.
TruncMoments trunc_t_mean(const TruncTSpec& spec, const QmcConfig& qmc = {});

struct OracleMoments {
  VectorXd mean;
  MatrixXd second;
  double acceptance = 0;
  Eigen::Index accepted = 0;
};

/// Plain accept/reject estimate from n unconstrained draws.
OracleMoments rejection_oracle(const TruncTSpec& spec, Eigen::Index n, std::uint64_t seed);

}  // namespace stlmm
