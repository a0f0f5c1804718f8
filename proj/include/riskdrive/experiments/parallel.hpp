#pragma once

// Worker pool for experiment grid cells. Each cell writes only its own
// result slot; callers aggregate the slots in index order afterwards, so the
// output does not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace riskdrive::experiments {

/// 0 means std::thread::hardware_concurrency().
void set_worker_count(int n);
int worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads and rethrows
/// the first exception after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace riskdrive::experiments
