#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kpz {

/// KPZ_THREADS if set and positive, else the hardware concurrency.
int default_threads();

/// Calls f(i) for i in [0, count) on up to `threads` workers. Work is handed
/// out by index, so callers that write result[i] get the same output for any
/// thread count. If calls throw, the exception of the smallest index wins.
template <typename F>
void parallel_for(std::int64_t count, int threads, F&& f) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::min<std::int64_t>(count, 1 << 20))));
  if (threads <= 1) {
    for (std::int64_t i = 0; i < count; ++i) f(i);
    return;
  }
  constexpr std::int64_t chunk = 16;
  std::atomic<std::int64_t> next{0};
  std::mutex guard;
  std::exception_ptr error;
  std::int64_t error_index = count;

  auto worker = [&] {
    for (;;) {
      const std::int64_t begin = next.fetch_add(chunk);
      if (begin >= count) return;
      const std::int64_t end = std::min(count, begin + chunk);
      for (std::int64_t i = begin; i < end; ++i) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(guard);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace kpz
