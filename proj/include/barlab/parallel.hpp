#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>

namespace barlab::parallel {

/// Caps OpenMP workers for all subsequent parallel regions.
void set_threads(int n);
int threads();

/// `--threads` value if given, else BARLAB_THREADS, else the OpenMP default.
int resolve_threads(std::optional<int> flag);

/// Runs fn(i) for i in [0, n) across OpenMP workers. The exception thrown for
/// the lowest index is rethrown on the calling thread.
template <class Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex mu;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace barlab::parallel
