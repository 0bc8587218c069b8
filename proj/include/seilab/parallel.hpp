#pragma once

#include <cstdint>

namespace seilab::parallel {

enum class ExecMode { serial, openmp };

/// Process-wide execution mode for the data-parallel kernels. Defaults to
/// openmp; the serial path is the reference implementation used by the
/// consistency tests and the benchmark.
ExecMode exec_mode();
void set_exec_mode(ExecMode mode);

/// Worker cap: min(omp_get_max_threads(), $SEI_LAB_THREADS). Always >= 1.
int max_threads();

/// Runs fn(i) for i in [0, n). Iterations must write disjoint state; both
/// modes then produce bitwise-identical results.
template <class F>
void parallel_for(std::int64_t n, F&& fn);

namespace detail {
bool use_openmp(std::int64_t n);
}

}  // namespace seilab::parallel

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seilab::parallel {

template <class F>
void parallel_for(std::int64_t n, F&& fn) {
#ifdef _OPENMP
  if (detail::use_openmp(n)) {
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace seilab::parallel
