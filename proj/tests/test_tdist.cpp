#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "barlab/error.hpp"
#include "barlab/tdist.hpp"

using namespace barlab::tdist;

namespace {

double integrate_density(double nu) {
  // y = tan(theta) maps the real line onto (-pi/2, pi/2); tails need no cutoff.
  const StudentTParams p{0.0, 1.0, nu};
  auto f = [&](double th) {
    const double y = std::tan(th);
    const double c = std::cos(th);
    return std::exp(t_logpdf(p, y)) / (c * c);
  };
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double half = std::numbers::pi / 2;
  return integrator.integrate(f, -half, 0.0) + integrator.integrate(f, 0.0, half);
}

}  // namespace

TEST(SpecialFunctions, LogGammaClosedForms) {
  EXPECT_NEAR(log_gamma(1.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(2.0), 0.0, 1e-14);
  EXPECT_NEAR(log_gamma(0.5), 0.5 * std::log(std::numbers::pi), 1e-14);
  EXPECT_NEAR(log_gamma(0.5), 0.5723649429247001, 1e-12);
}

TEST(SpecialFunctions, LogGammaAgreesWithLibm) {
  for (double x = 0.5; x <= 1e6; x *= 1.37) {
    const double ref = std::lgamma(x);
    // absolute 1e-10 where representable; beyond that, a few ulps of the value
    EXPECT_NEAR(log_gamma(x), ref, 1e-10 + 4e-16 * std::fabs(ref)) << "x=" << x;
  }
  EXPECT_NEAR(log_gamma(0.1), std::lgamma(0.1), 1e-12);
}

TEST(SpecialFunctions, LogGammaRatioMatchesDifference) {
  for (double x : {0.7, 3.0, 12.0, 150.0, 5e5}) {
    for (double b : {0.5, 1.0, 2.5}) {
      const double ref = std::lgamma(x + b) - std::lgamma(x);
      EXPECT_NEAR(log_gamma_ratio(x, b), ref, 1e-9 * std::max(1.0, std::fabs(ref))) << x << " " << b;
    }
  }
}

TEST(SpecialFunctions, Digamma) {
  EXPECT_NEAR(digamma(1.0), -0.57721566490153286, 1e-14);
  for (double x = 0.5; x <= 1e6; x *= 1.53) {
    EXPECT_NEAR(digamma(x), boost::math::digamma(x), 1e-10) << "x=" << x;
  }
  // recurrence psi(x + 1) = psi(x) + 1/x
  for (double x : {0.6, 1.7, 9.99, 10.01}) EXPECT_NEAR(digamma(x + 1.0), digamma(x) + 1.0 / x, 1e-13);
}

TEST(SpecialFunctions, RegIncBetaAgainstBoostAndMonotone) {
  for (double a : {0.5, 1.0, 2.5, 15.0, 500.0}) {
    for (double b : {0.5, 1.0, 3.0}) {
      double prev = -1.0;
      for (double x = 0.0; x <= 1.0; x += 0.05) {
        const double v = reg_inc_beta(a, b, x);
        EXPECT_NEAR(v, boost::math::ibeta(a, b, x), 1e-12) << a << " " << b << " " << x;
        EXPECT_GE(v, prev);
        prev = v;
      }
    }
  }
  EXPECT_THROW(reg_inc_beta(0.0, 1.0, 0.5), barlab::DomainError);
  EXPECT_THROW(reg_inc_beta(1.0, 1.0, 1.5), barlab::DomainError);
}

TEST(StudentT, LogPdfSymmetryAndNormalLimit) {
  const StudentTParams p{0.3, 1.7, 4.2};
  for (double a : {0.0, 0.1, 1.0, 7.5, 1e3}) EXPECT_DOUBLE_EQ(t_logpdf(p, p.mu + a), t_logpdf(p, p.mu - a));
  EXPECT_NEAR(t_logpdf({0.0, 1.0, 1e6}, 0.0), -0.918939, 1e-4);
  EXPECT_NEAR(t_logpdf({0.0, 1.0, 1e6}, 0.0), -kHalfLog2Pi, 1e-6);
}

TEST(StudentT, LogPdfAgainstBoost) {
  for (double nu : {2.1, 3.0, 5.0, 30.0, 1e6}) {
    boost::math::students_t_distribution<double> d(nu);
    for (double y : {-30.0, -2.0, -0.1, 0.0, 0.5, 4.0}) {
      EXPECT_NEAR(t_logpdf({0.0, 1.0, nu}, y), std::log(boost::math::pdf(d, y)), 1e-10) << nu << " " << y;
    }
  }
}

TEST(StudentT, NormalizesToOne) {
  for (double nu : {2.0001, 2.1, 3.0, 5.0, 30.0, 1e6}) {
    EXPECT_NEAR(integrate_density(nu), 1.0, 1e-6) << "nu=" << nu;
  }
}

TEST(StudentT, CdfBasics) {
  const StudentTParams p{-0.4, 2.0, 3.5};
  EXPECT_EQ(t_cdf(p, p.mu), 0.5);
  EXPECT_NEAR(t_cdf({0.0, 1.0, 1e6}, 1.959964), 0.975, 1e-4);
  double prev = 0.0;
  for (double y = -50.0; y <= 50.0; y += 0.37) {
    const double v = t_cdf(p, y);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(StudentT, CdfMatchesQuadratureOfDensity) {
  // F(1) = 1/2 + integral_0^1 pdf, nu = 3
  const StudentTParams p{0.0, 1.0, 3.0};
  const double area = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double y) { return std::exp(t_logpdf(p, y)); }, 0.0, 1.0, 15, 1e-14);
  EXPECT_NEAR(t_cdf(p, 1.0), 0.5 + area, 1e-8);
  EXPECT_NEAR(t_cdf(p, 1.0), 0.80449889052211482, 1e-12);
}

TEST(StudentT, CdfAgainstBoost) {
  for (double nu : {2.1, 3.0, 5.0, 30.0, 1e6}) {
    boost::math::students_t_distribution<double> d(nu);
    for (double y : {-40.0, -3.0, -1e-3, 1e-6, 0.7, 6.0}) {
      EXPECT_NEAR(t_cdf({0.0, 1.0, nu}, y), boost::math::cdf(d, y), 1e-12) << nu << " " << y;
    }
  }
}

TEST(StudentT, NearLowerBoundMatchesNuTwoClosedForm) {
  // nu = 2 density (2 + t^2)^(-3/2) and CDF 1/2 + t / (2 sqrt(2 + t^2))
  const StudentTParams p{0.0, 1.0, 2.0001};
  for (double y : {-20.0, -1.0, 0.0, 0.3, 2.0, 15.0}) {
    EXPECT_NEAR(std::exp(t_logpdf(p, y)), std::pow(2.0 + y * y, -1.5), 1e-4);
    EXPECT_NEAR(t_cdf(p, y), 0.5 + y / (2.0 * std::sqrt(2.0 + y * y)), 1e-4);
  }
}

TEST(StudentT, QuantileRoundTrip) {
  for (double nu : {2.1, 4.0, 30.0, 1e6}) {
    const StudentTParams p{0.2, 0.8, nu};
    for (int k = 1; k <= 99; ++k) {
      const double q = k / 100.0;
      EXPECT_NEAR(t_cdf(p, t_quantile(p, q)), q, 1e-8) << nu << " " << q;
    }
  }
}

TEST(StudentT, MeanVar) {
  EXPECT_DOUBLE_EQ(t_mean_var({1.5, 1.0, 4.0}).variance, 2.0);
  EXPECT_DOUBLE_EQ(t_mean_var({1.5, 1.0, 4.0}).mean, 1.5);
  EXPECT_NEAR(t_mean_var({0.0, 2.0, 1e6}).variance, 4.000008, 1e-6);
  EXPECT_THROW(t_mean_var({0.0, 1.0, 2.0}), barlab::DomainError);
}

TEST(StudentT, MonteCarloVariance) {
  std::mt19937_64 rng(7);
  std::student_t_distribution<double> d(5.0);
  const int n = 10'000'000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = d(rng);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  const double expected = t_mean_var({0.0, 1.0, 5.0}).variance;
  EXPECT_NEAR(expected, 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(var / expected, 1.0, 0.01);
}

TEST(StudentT, DomainErrors) {
  EXPECT_THROW(t_logpdf({0.0, 0.0, 5.0}, 0.0), barlab::DomainError);
  EXPECT_THROW(t_logpdf({0.0, -1.0, 5.0}, 0.0), barlab::DomainError);
  EXPECT_THROW(t_logpdf({0.0, 1.0, 2.0}, 0.0), barlab::DomainError);
  EXPECT_THROW(t_cdf({0.0, 1.0, 1.5}, 0.0), barlab::DomainError);
  EXPECT_THROW(gauss_logpdf({0.0, 0.0}, 0.0), barlab::DomainError);
}

TEST(StudentT, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu_d(-2.0, 2.0), sig_d(0.2, 3.0), nu_d(2.2, 40.0),
      y_d(-6.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    const StudentTParams p{mu_d(rng), sig_d(rng), nu_d(rng)};
    const double y = y_d(rng);
    const StudentTGrad g = t_logpdf_grad(p, y);
    auto fd = [&](auto mutate, double scale) {
      const double h = 1e-4 * scale;
      StudentTParams a = p, b = p;
      mutate(a, h);
      mutate(b, -h);
      return (t_logpdf(a, y) - t_logpdf(b, y)) / (2.0 * h);
    };
    const double dmu = fd([](StudentTParams& q, double h) { q.mu += h; }, p.sigma);
    const double dsig = fd([](StudentTParams& q, double h) { q.sigma += h; }, p.sigma);
    const double dnu = fd([](StudentTParams& q, double h) { q.nu += h; }, p.nu);
    auto rel = [](double a, double b) { return std::fabs(a - b) / std::max(1e-3, std::fabs(b)); };
    EXPECT_LT(rel(g.d_mu, dmu), 1e-5);
    EXPECT_LT(rel(g.d_sigma, dsig), 1e-5);
    EXPECT_LT(rel(g.d_nu, dnu), 1e-5);
  }
}

TEST(StudentT, GradientSpecialPoints) {
  const StudentTParams p{0.7, 1.3, 6.0};
  EXPECT_EQ(t_logpdf_grad(p, p.mu).d_mu, 0.0);
  const StudentTParams big{0.0, 1.5, 1e6};
  for (double y : {-3.0, -0.5, 0.0, 2.0}) {
    const double z = y / big.sigma;
    EXPECT_NEAR(t_logpdf_grad(big, y).d_sigma, (z * z - 1.0) / big.sigma, 1e-3);
  }
}

TEST(StudentT, GaussianAgreementAtLargeNu) {
  const StudentTParams p{0.5, 1.2, 1e6};
  const GaussianParams g = moment_matched_gaussian(p);
  for (double y = p.mu - 6 * p.sigma; y <= p.mu + 6 * p.sigma; y += 0.05) {
    EXPECT_LT(std::fabs(t_logpdf(p, y) - gauss_logpdf(g, y)), 1e-3);
  }
}

TEST(Gaussian, Basics) {
  EXPECT_NEAR(gauss_logpdf({0.0, 1.0}, 0.0), -0.918939, 1e-6);
  EXPECT_EQ(gauss_cdf({0.0, 1.0}, 0.0), 0.5);
  // erf oracle
  EXPECT_NEAR(gauss_cdf({0.0, 1.0}, 1.959964), 0.5 * (1.0 + std::erf(1.959964 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(gauss_cdf({0.0, 1.0}, 1.959964), 0.975, 1e-6);
}
