#pragma once

namespace wsib::parallel {

/// Worker count used by the OpenMP kernels.
int thread_count();
void set_thread_count(int threads);

/// Applies WSIBENCH_THREADS as an upper bound on the worker count, if set.
void configure_from_env();

/// Restores the previous worker count on scope exit.
class ScopedThreads {
 public:
  explicit ScopedThreads(int threads);
  ~ScopedThreads();
  ScopedThreads(const ScopedThreads&) = delete;
  ScopedThreads& operator=(const ScopedThreads&) = delete;

 private:
  int previous_;
};

}  // namespace wsib::parallel
