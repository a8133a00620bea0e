#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace resamplekit {

/// Worker-count cap. Results never depend on it: every task owns its output
/// slot and its random substream.
struct Parallelism {
  unsigned threads = 1;
};

/// Calls body(i) for i in [0, count) on up to par.threads workers using
/// static contiguous chunks. The first exception thrown by any worker is
/// rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t count, Parallelism par, Body&& body) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, par.threads), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace resamplekit
