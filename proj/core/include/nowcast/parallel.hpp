#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace nowcast {

// Worker count: min(hardware, NOWCAST_THREADS) when the env var is set.
inline int thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("NOWCAST_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Work items must be independent; determinism is
// the caller's job (each item derives its own random stream from its index).
// The first exception thrown by any item is rethrown on the calling thread.
inline void parallel_for(int n, const std::function<void(int)>& fn, int n_threads = 0) {
  if (n <= 0) return;
  if (n_threads <= 0) n_threads = thread_count();
  n_threads = std::min(n_threads, n);
  if (n_threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::atomic<int> next{0};
  for (int w = 0; w < n_threads; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

} // namespace nowcast
