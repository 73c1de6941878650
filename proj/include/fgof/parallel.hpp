#ifndef FGOF_PARALLEL_HPP
#define FGOF_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace fgof {

namespace detail {
inline std::atomic<int>& thread_cap_storage() {
  static std::atomic<int> cap{0};  // 0 = not set, use defaults
  return cap;
}
}  // namespace detail

/// Caps the number of worker threads used by parallel_for. 0 restores the
/// default (FGOF_THREADS env var, else hardware concurrency).
inline void set_max_threads(int n) { detail::thread_cap_storage().store(n); }

inline int max_threads() {
  int cap = detail::thread_cap_storage().load();
  if (cap > 0) return cap;
  if (const char* env = std::getenv("FGOF_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks,
/// one per worker; each invocation must write only to state owned by index i,
/// so results are identical for any thread count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn,
                         int threads = 0) {
  if (n <= 0) return;
  int nt = threads > 0 ? threads : max_threads();
  nt = static_cast<int>(std::min<std::int64_t>(nt, n));
  if (nt <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int t = 0; t < nt; ++t) {
    const std::int64_t lo = n * t / nt;
    const std::int64_t hi = n * (t + 1) / nt;
    workers.emplace_back([&, lo, hi]() {
      try {
        for (std::int64_t i = lo; i < hi; ++i) {
          if (failed.load(std::memory_order_relaxed)) return;
          fn(i);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fgof

#endif
