#ifndef QAFFDE_PARALLEL_HPP
#define QAFFDE_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace qaffde {

/// Worker count: hardware concurrency, capped by the QAFFDE_THREADS env var.
inline int max_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("QAFFDE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

/// Static block partition of [0, n); each index writes its own output slot,
/// so results are independent of the thread count.
inline void parallel_for(long n, const std::function<void(long, long)>& body) {
  const int threads = std::min<long>(max_threads(), n > 0 ? n : 1);
  if (threads <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const long chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk;
    const long hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& th : pool) th.join();
}

}  // namespace qaffde

#endif  // QAFFDE_PARALLEL_HPP
