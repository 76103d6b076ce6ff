#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace infocluster {

/// Worker count for per-record fan-out: INFOCLUSTER_WORKERS if set and
/// positive, otherwise the hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("INFOCLUSTER_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return hw;
}

/// Calls fn(i) for i in [0, n) over contiguous chunks. Rethrows the first
/// exception from the lowest failing chunk so results do not depend on
/// scheduling.
template <typename Fn>
void parallel_for(size_t n, Fn&& fn, unsigned workers = worker_count()) {
  workers = static_cast<unsigned>(std::min<size_t>(std::max(1u, workers), std::max<size_t>(n, 1)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        const size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        for (size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace infocluster
