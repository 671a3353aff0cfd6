#pragma once

namespace tsembed {

/// Number of OpenMP workers the parallel kernels will use.
int worker_threads();

/// Caps parallelism. n <= 0 restores the runtime default.
void set_worker_threads(int n);

/// Applies TSEMBED_THREADS from the environment, if set. Returns the
/// resulting worker count.
int apply_thread_env();

} // namespace tsembed
