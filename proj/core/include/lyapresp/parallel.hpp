#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace lyapresp {

/// Runs fn(task_index) for task_index in [0, count) on up to `threads` workers
/// pulling from a shared queue. Each task must write only to its own slot of a
/// pre-sized result container, so the outcome is independent of scheduling;
/// callers then reduce over task index in a fixed order. The first exception
/// thrown by any task is re-thrown after all workers finish.
template <typename Fn>
void run_tasks(std::int64_t count, int threads, Fn&& fn) {
  if (count <= 0) return;
  if (threads < 1) threads = 1;
  if (threads == 1) {
    for (std::int64_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::int64_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace lyapresp
