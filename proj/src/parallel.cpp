#include "wsib/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace wsib::parallel {

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int threads) { omp_set_num_threads(std::max(1, threads)); }

void configure_from_env() {
  const char* env = std::getenv("WSIBENCH_THREADS");
  if (env == nullptr || *env == '\0') return;
  try {
    const int cap = std::stoi(env);
    if (cap >= 1) set_thread_count(std::min(cap, thread_count()));
  } catch (const std::exception&) {
    // Ignored: a malformed cap leaves the runtime default in place.
  }
}

ScopedThreads::ScopedThreads(int threads) : previous_(thread_count()) { set_thread_count(threads); }

ScopedThreads::~ScopedThreads() { set_thread_count(previous_); }

}  // namespace wsib::parallel
