#include "hiervid/threading.hpp"

#include <malloc.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace hiervid {

namespace {

// Activation and gradient buffers are allocated and freed once per training
// step. Left at the defaults, glibc mmaps and returns them to the kernel
// each time, so every step re-faults ~1 GB of pages. Keep large blocks on
// the heap free list instead.
const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();

int env_threads() {
  if (const char* s = std::getenv("HIERVID_THREADS")) {
    const int n = std::atoi(s);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::atomic<int> g_override{0};

}  // namespace

int max_threads() {
  const int o = g_override.load(std::memory_order_relaxed);
  if (o >= 1) return o;
  static const int from_env = env_threads();
  return from_env;
}

void set_max_threads(int n) { g_override.store(n, std::memory_order_relaxed); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  const int64_t workers =
      std::min<int64_t>(static_cast<int64_t>(max_threads()), n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  const int64_t chunk = (n + workers - 1) / workers;
  for (int64_t w = 0; w < workers; ++w) {
    const int64_t begin = w * chunk;
    const int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hiervid
