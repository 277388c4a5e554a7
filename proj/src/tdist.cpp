#include "barlab/tdist.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "barlab/error.hpp"

namespace barlab::tdist {

namespace {

constexpr double kPi = std::numbers::pi;

// Lanczos approximation, g = 7, n = 9.
constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,     676.5203681218851,     -1259.1392167224028,
    771.32342877765313,      -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,    9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_log_gamma(double x) {
  // valid for x >= 0.5
  const double xm1 = x - 1.0;
  double a = kLanczos[0];
  const double t = xm1 + kLanczosG + 0.5;
  for (std::size_t i = 1; i < kLanczos.size(); ++i) a += kLanczos[i] / (xm1 + static_cast<double>(i));
  return kHalfLog2Pi + (xm1 + 0.5) * std::log(t) - t + std::log(a);
}

// Stirling correction ln Gamma(x) - [(x - 1/2) ln x - x + ln sqrt(2 pi)], x >= 10.
double stirling_correction(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r * (1.0 / 12.0 +
              r2 * (-1.0 / 360.0 +
                    r2 * (1.0 / 1260.0 + r2 * (-1.0 / 1680.0 + r2 * (1.0 / 1188.0)))));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 20000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw DomainError("reg_inc_beta: continued fraction did not converge");
}

double log_beta(double a, double b) {
  // ln B(a, b) = ln Gamma(b) - [ln Gamma(a + b) - ln Gamma(a)], larger argument as a
  if (a < b) std::swap(a, b);
  return log_gamma(b) - log_gamma_ratio(a, b);
}

// I_x(a, b) with y = 1 - x and both logs supplied separately; with large a the
// prefactor amplifies any rounding in ln x.
double inc_beta_xy(double a, double b, double x, double y, double log_x, double log_y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = a * log_x + b * log_y - log_beta(a, b);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, y) / b;
}

}  // namespace

void validate(const StudentTParams& p) {
  require(std::isfinite(p.mu), "student-t: mu must be finite");
  require(std::isfinite(p.sigma) && p.sigma > 0.0, "student-t: sigma must be > 0");
  require(std::isfinite(p.nu) && p.nu > 2.0, "student-t: nu must be > 2");
}

void validate(const GaussianParams& g) {
  require(std::isfinite(g.mu), "gaussian: mu must be finite");
  require(std::isfinite(g.var) && g.var > 0.0, "gaussian: var must be > 0");
}

double log_gamma(double x) {
  require(x > 0.0 && std::isfinite(x), "log_gamma: x must be > 0");
  if (x < 0.5) {
    // reflection
    return std::log(kPi / std::sin(kPi * x)) - lanczos_log_gamma(1.0 - x);
  }
  if (x < 10.0) return lanczos_log_gamma(x);
  return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + stirling_correction(x);
}

double log_gamma_ratio(double x, double b) {
  require(x > 0.0 && x + b > 0.0, "log_gamma_ratio: arguments must be > 0");
  if (x < 10.0 || x + b < 10.0) return log_gamma(x + b) - log_gamma(x);
  // (x+b-1/2) ln(x+b) - (x-1/2) ln x - b, rearranged to keep precision
  const double main = (x - 0.5) * std::log1p(b / x) + b * std::log(x + b) - b;
  return main + stirling_correction(x + b) - stirling_correction(x);
}

double digamma(double x) {
  require(x > 0.0 && std::isfinite(x), "digamma: x must be > 0");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double r = 1.0 / x;
  const double r2 = r * r;
  const double series =
      r2 * (1.0 / 12.0 -
            r2 * (1.0 / 120.0 -
                  r2 * (1.0 / 252.0 - r2 * (1.0 / 240.0 - r2 * (1.0 / 132.0 - r2 * (691.0 / 32760.0))))));
  return acc + std::log(x) - 0.5 * r - series;
}

double reg_inc_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, "reg_inc_beta: a, b must be > 0");
  require(x >= 0.0 && x <= 1.0, "reg_inc_beta: x must lie in [0, 1]");
  return inc_beta_xy(a, b, x, 1.0 - x, std::log(x), std::log1p(-x));
}

double t_logpdf(const StudentTParams& p, double y) {
  validate(p);
  const double z = (y - p.mu) / p.sigma;
  const double half_nu = 0.5 * p.nu;
  return log_gamma_ratio(half_nu, 0.5) - 0.5 * std::log(p.nu * kPi) - std::log(p.sigma) -
         (half_nu + 0.5) * std::log1p(z * z / p.nu);
}

double t_cdf(const StudentTParams& p, double y) {
  validate(p);
  const double z = (y - p.mu) / p.sigma;
  if (z == 0.0) return 0.5;
  const double z2 = z * z;
  const double x = p.nu / (p.nu + z2);
  const double one_minus_x = z2 / (p.nu + z2);
  const double log_x = -std::log1p(z2 / p.nu);
  const double log_y = std::log(z2) - std::log(p.nu + z2);
  const double tail = 0.5 * inc_beta_xy(0.5 * p.nu, 0.5, x, one_minus_x, log_x, log_y);
  return z > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(const StudentTParams& p, double q) {
  validate(p);
  require(q > 0.0 && q < 1.0, "t_quantile: q must lie in (0, 1)");
  if (q == 0.5) return p.mu;
  // bracket in standardized units
  double lo = -1.0, hi = 1.0;
  const StudentTParams unit{0.0, 1.0, p.nu};
  while (t_cdf(unit, lo) > q) lo *= 2.0;
  while (t_cdf(unit, hi) < q) hi *= 2.0;
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = t_cdf(unit, z) - q;
    if (f == 0.0) break;
    if (f > 0.0) hi = z; else lo = z;
    const double dens = std::exp(t_logpdf(unit, z));
    double next = z - f / dens;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - z) <= 1e-15 * std::max(1.0, std::fabs(z))) {
      z = next;
      break;
    }
    z = next;
  }
  return p.mu + p.sigma * z;
}

MeanVar t_mean_var(const StudentTParams& p) {
  validate(p);
  return {p.mu, p.sigma * p.sigma * p.nu / (p.nu - 2.0)};
}

StudentTGrad t_logpdf_grad(const StudentTParams& p, double y) {
  validate(p);
  const double z = (y - p.mu) / p.sigma;
  const double z2 = z * z;
  const double w = 1.0 + z2 / p.nu;
  const double k = (p.nu + 1.0) / p.nu;
  StudentTGrad g;
  g.d_mu = k * z / (p.sigma * w);
  g.d_sigma = -1.0 / p.sigma + k * z2 / (p.sigma * w);
  g.d_nu = 0.5 * (digamma(0.5 * (p.nu + 1.0)) - digamma(0.5 * p.nu)) - 0.5 / p.nu -
           0.5 * std::log1p(z2 / p.nu) + 0.5 * (p.nu + 1.0) * z2 / (p.nu * p.nu * w);
  return g;
}

GaussianParams moment_matched_gaussian(const StudentTParams& p) {
  const MeanVar mv = t_mean_var(p);
  return {mv.mean, mv.variance};
}

double gauss_logpdf(const GaussianParams& g, double y) {
  validate(g);
  const double d = y - g.mu;
  return -kHalfLog2Pi - 0.5 * std::log(g.var) - 0.5 * d * d / g.var;
}

double gauss_cdf(const GaussianParams& g, double y) {
  validate(g);
  return 0.5 * std::erfc(-(y - g.mu) / std::sqrt(2.0 * g.var));
}

}  // namespace barlab::tdist
