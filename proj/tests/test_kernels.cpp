#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "barlab/error.hpp"
#include "barlab/kernels.hpp"
#include "barlab/parallel.hpp"

using namespace barlab;

namespace {

std::vector<double> random_matrix(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// plain definition: C[i][j] = sum_k A[i][k] B[k][j]
std::vector<double> naive(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                          bool a_t, const std::vector<double>& b, bool b_t) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a_t ? a[p * m + i] : a[i * k + p];
        const double bv = b_t ? b[j * k + p] : b[p * n + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * n + j] = static_cast<double>(s);
    }
  return c;
}

void expect_close(const std::vector<double>& x, const std::vector<double>& y, double tol) {
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], tol) << i;
}

}  // namespace

TEST(Gemm, MatchesNaiveAndReferenceOnOddShapes) {
  std::mt19937_64 rng(3);
  for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {5, 3, 7}, {37, 19, 65}, {130, 9, 4}}) {
    const auto a = random_matrix(rng, m * k);
    const auto b = random_matrix(rng, k * n);
    const auto bt = random_matrix(rng, n * k);
    const auto at = random_matrix(rng, k * m);
    std::vector<double> c(m * n), r(m * n);

    kernels::gemm_nn<double>(m, n, k, a, b, c);
    kernels::reference::gemm_nn<double>(m, n, k, a, b, r);
    expect_close(c, naive(m, n, k, a, false, b, false), 1e-12);
    expect_close(c, r, 1e-12);

    kernels::gemm_nt<double>(m, n, k, a, bt, c);
    kernels::reference::gemm_nt<double>(m, n, k, a, bt, r);
    expect_close(c, naive(m, n, k, a, false, bt, true), 1e-12);
    expect_close(c, r, 1e-12);

    kernels::gemm_tn<double>(m, n, k, at, b, c);
    kernels::reference::gemm_tn<double>(m, n, k, at, b, r);
    expect_close(c, naive(m, n, k, at, true, b, false), 1e-12);
    expect_close(c, r, 1e-12);
  }
}

TEST(Gemm, AccumulateAddsIntoOutput) {
  std::mt19937_64 rng(4);
  const std::size_t m = 6, n = 5, k = 4;
  const auto a = random_matrix(rng, m * k);
  const auto b = random_matrix(rng, k * n);
  std::vector<double> c(m * n, 1.0);
  kernels::gemm_nn<double>(m, n, k, a, b, c, true);
  auto expected = naive(m, n, k, a, false, b, false);
  for (auto& v : expected) v += 1.0;
  expect_close(c, expected, 1e-12);
}

TEST(Gemm, BitIdenticalAcrossThreadCounts) {
  std::mt19937_64 rng(5);
  const std::size_t m = 257, n = 64, k = 129;
  std::vector<float> a(m * k), b(k * n), c1(m * n), c4(m * n);
  std::normal_distribution<float> d;
  for (auto& x : a) x = d(rng);
  for (auto& x : b) x = d(rng);
  const int saved = parallel::threads();
  parallel::set_threads(1);
  kernels::gemm_nn<float>(m, n, k, a, b, c1);
  parallel::set_threads(4);
  kernels::gemm_nn<float>(m, n, k, a, b, c4);
  parallel::set_threads(saved);
  EXPECT_EQ(c1, c4);
}

TEST(Gemm, ShapeMismatchIsContractViolation) {
  std::vector<double> a(6), b(6), c(3);
  EXPECT_THROW(kernels::gemm_nn<double>(2, 2, 3, a, b, c), ContractViolation);
}
