#include "barlab/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "barlab/error.hpp"

namespace barlab::parallel {

void set_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be >= 1");
  omp_set_num_threads(n);
}

int threads() { return omp_get_max_threads(); }

int resolve_threads(std::optional<int> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BARLAB_THREADS"); env && *env) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("BARLAB_THREADS is not an integer: ") + env);
    }
  }
  return omp_get_max_threads();
}

}  // namespace barlab::parallel
