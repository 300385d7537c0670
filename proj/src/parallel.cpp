#include "stlmm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

namespace stlmm {

namespace {
std::atomic<int> override_threads{0};
}

int thread_count() {
  const int forced = override_threads.load();
  if (forced > 0) return forced;
  if (const char* env = std::getenv("STLMM_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_thread_count(int n) { override_threads.store(std::max(0, n)); }

}  // namespace stlmm
