#pragma once

// Dense row-major GEMM kernels used by the autodiff engine.
//
// Every output row is produced by the same instruction sequence no matter how
// many threads run, so results are bit-identical across thread counts. The
// `reference` namespace holds plain triple loops used by tests and benchmarks.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "barlab/error.hpp"

namespace barlab::kernels {

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

// Register tile: rows i..i+R-1, columns j0..j0+w-1 of C, accumulated over p
// in increasing order. W is the compile-time tile width; w <= W is the width
// actually used (narrower only at the right edge).
template <class T, std::size_t R, std::size_t W>
void nn_tile(std::size_t i, std::size_t j0, std::size_t w, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c, bool accumulate) {
  T acc[R][W];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t jj = 0; jj < W; ++jj)
      acc[r][jj] = accumulate && jj < w ? c[(i + r) * n + j0 + jj] : T(0);
  if (w == W) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const T x = a[(i + r) * k + p];
#pragma omp simd
        for (std::size_t jj = 0; jj < W; ++jj) acc[r][jj] += x * bp[jj];
      }
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const T x = a[(i + r) * k + p];
        for (std::size_t jj = 0; jj < w; ++jj) acc[r][jj] += x * bp[jj];
      }
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t jj = 0; jj < w; ++jj) c[(i + r) * n + j0 + jj] = acc[r][jj];
}

template <class T>
inline constexpr std::size_t kTileWidth = 256 / sizeof(T);

template <class T, std::size_t R>
void nn_rows(std::size_t i, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr std::size_t W = kTileWidth<T>;
  for (std::size_t j0 = 0; j0 < n; j0 += W)
    nn_tile<T, R, W>(i, j0, std::min(W, n - j0), n, k, a, b, c, accumulate);
}

}  // namespace detail

/// C(m x n) = A(m x k) * B(k x n), or C += ... when `accumulate`.
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  detail::check(a.size() == m * k && b.size() == k * n && c.size() == m * n, "gemm_nn: shape");
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>(m / 4);
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    detail::nn_rows<T, 4>(static_cast<std::size_t>(blk) * 4, n, k, a.data(), b.data(), c.data(), accumulate);
  }
  for (std::size_t i = (m / 4) * 4; i < m; ++i) {
    detail::nn_rows<T, 1>(i, n, k, a.data(), b.data(), c.data(), accumulate);
  }
}

/// C(m x n) = A(m x k) * B(n x k)^T, via an explicit transpose of B and the
/// nn kernel.
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  detail::check(a.size() == m * k && b.size() == n * k && c.size() == m * n, "gemm_nt: shape");
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn<T>(m, n, k, a, bt, c, accumulate);
}

/// C(m x n) = A(k x m)^T * B(k x n), via an explicit transpose of A.
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  detail::check(a.size() == k * m && b.size() == k * n && c.size() == m * n, "gemm_tn: shape");
  std::vector<T> at(m * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
  gemm_nn<T>(m, n, k, at, b, c, accumulate);
}

namespace reference {

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

}  // namespace reference

}  // namespace barlab::kernels
