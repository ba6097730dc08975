#include "nbv/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace nbv {

int effective_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("NBV_THREADS")) {
    try {
      const int n = std::stoi(env);
      return n < 1 ? 1 : n;
    } catch (...) {
    }
  }
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads() {
#ifdef _OPENMP
  omp_set_num_threads(effective_threads());
#endif
}

}  // namespace nbv
