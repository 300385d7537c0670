#pragma once

// Scalar special functions backing the distribution kernels.

namespace stlmm::special {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogPi = 1.14472988584940017414;
inline constexpr double kLog2Pi = 1.83787706640934548356;

/// log Gamma(x) for x > 0 (reentrant).
double log_gamma(double x);

double normal_pdf(double x);
double normal_cdf(double x);
double normal_log_cdf(double x);
/// Quantile of the standard normal, full double precision on (0, 1).
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b).
double beta_inc(double a, double b, double x);
/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Inverse of P(a, .) in its second argument.
double gamma_p_inv(double a, double p);

/// Univariate Student-t with unit scale; nu = +inf gives the normal.
double student_t_log_pdf(double x, double nu);
double student_t_pdf(double x, double nu);
double student_t_cdf(double x, double nu);

}  // namespace stlmm::special
