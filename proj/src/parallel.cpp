#include "tsembed/parallel.hpp"

#include <cstdlib>
#include <omp.h>
#include <string>

namespace tsembed {

namespace {
int default_threads = omp_get_max_threads();
}

int worker_threads() { return omp_get_max_threads(); }

void set_worker_threads(int n) { omp_set_num_threads(n > 0 ? n : default_threads); }

int apply_thread_env() {
  if (const char *env = std::getenv("TSEMBED_THREADS")) {
    try {
      set_worker_threads(std::stoi(env));
    } catch (const std::exception &) {
      // unparsable values leave the default in place
    }
  }
  return worker_threads();
}

} // namespace tsembed
