#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace lbt {

inline unsigned& thread_count_ref() {
  static unsigned n = std::thread::hardware_concurrency() ? std::thread::hardware_concurrency() : 1;
  return n;
}

inline unsigned thread_count() { return thread_count_ref(); }
inline void set_thread_count(unsigned n) { thread_count_ref() = n ? n : 1; }

/// Static block partition over [0, n). Each index is visited exactly once;
/// results must be written to per-index slots so reductions stay deterministic
/// regardless of the thread count.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  unsigned nt = thread_count();
  if (nt <= 1 || n < 2 * nt) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::size_t chunk = (n + nt - 1) / nt;
  for (unsigned t = 0; t < nt; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// Deterministic parallel sum: slots are filled in parallel, reduced sequentially.
template <typename F>
double parallel_sum(std::size_t n, F&& term) {
  std::vector<double> slots(n);
  parallel_for(n, [&](std::size_t i) { slots[i] = term(i); });
  double acc = 0.0;
  for (double s : slots) acc += s;
  return acc;
}

}  // namespace lbt
