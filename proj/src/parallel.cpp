#include "seilab/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seilab::parallel {

namespace {

std::atomic<ExecMode> g_mode{ExecMode::openmp};

int read_thread_cap() {
  int cap = 1;
#ifdef _OPENMP
  cap = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("SEI_LAB_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested >= 1 && requested < cap) cap = requested;
    } catch (...) {
      // ignore malformed values, keep the OpenMP default
    }
  }
  return cap < 1 ? 1 : cap;
}

}  // namespace

ExecMode exec_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_exec_mode(ExecMode mode) {
  g_mode.store(mode, std::memory_order_relaxed);
}

int max_threads() {
  static const int cap = read_thread_cap();
  return cap;
}

namespace detail {

bool use_openmp(std::int64_t n) {
  return exec_mode() == ExecMode::openmp && max_threads() > 1 && n > 1;
}

}  // namespace detail

}  // namespace seilab::parallel
