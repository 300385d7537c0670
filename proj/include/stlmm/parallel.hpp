#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace stlmm {

/// Worker count: STLMM_THREADS if set and positive, else the hardware count.
int thread_count();
/// Overrides the environment for the rest of the process (0 restores it).
void set_thread_count(int n);

namespace detail {
inline thread_local bool in_parallel_region = false;
}

/// Calls f(i) for i in [0, n) on up to thread_count() threads with static
/// contiguous chunks. If any call throws, the exception from the smallest
/// index is rethrown after all workers join. Nested calls run serially.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers =
      detail::in_parallel_region ? 1 : std::min<std::size_t>(n, static_cast<std::size_t>(thread_count()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t begin, std::size_t end) {
    const bool outer = detail::in_parallel_region;
    detail::in_parallel_region = true;
    for (std::size_t i = begin; i < end; ++i) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    detail::in_parallel_region = outer;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    if (begin >= n) break;
    pool.emplace_back(run, begin, std::min(n, begin + chunk));
  }
  run(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace stlmm
