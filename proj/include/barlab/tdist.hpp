#pragma once

// Student's t and Gaussian numerics, plus the special functions behind them.
// Everything here is pure and reentrant.

namespace barlab::tdist {

struct StudentTParams {
  double mu = 0.0;
  double sigma = 1.0;  // scale, > 0
  double nu = 5.0;     // degrees of freedom, > 2 so the variance exists
};

struct GaussianParams {
  double mu = 0.0;
  double var = 1.0;
};

struct StudentTGrad {
  double d_mu = 0.0;
  double d_sigma = 0.0;
  double d_nu = 0.0;
};

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

/// Throws DomainError unless sigma > 0 and nu > 2 (and all finite).
void validate(const StudentTParams& p);
void validate(const GaussianParams& g);

// --- special functions -----------------------------------------------------

/// ln Gamma(x) for x > 0. Lanczos (g = 7, 9 terms) below 10, Stirling series above.
double log_gamma(double x);

/// ln Gamma(x + b) - ln Gamma(x), accurate when x is large and b small.
double log_gamma_ratio(double x, double b);

/// Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic series.
double digamma(double x);

/// Regularized incomplete beta I_x(a, b), continued fraction with the usual
/// symmetry switch. a, b > 0, x in [0, 1].
double reg_inc_beta(double a, double b, double x);

// --- distributions ----------------------------------------------------------

double t_logpdf(const StudentTParams& p, double y);
double t_cdf(const StudentTParams& p, double y);
/// Inverse CDF by safeguarded Newton iteration on t_cdf; q in (0, 1).
double t_quantile(const StudentTParams& p, double q);
MeanVar t_mean_var(const StudentTParams& p);
StudentTGrad t_logpdf_grad(const StudentTParams& p, double y);

/// The Gaussian sharing the t's mean and variance.
GaussianParams moment_matched_gaussian(const StudentTParams& p);

double gauss_logpdf(const GaussianParams& g, double y);
double gauss_cdf(const GaussianParams& g, double y);

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

}  // namespace barlab::tdist
