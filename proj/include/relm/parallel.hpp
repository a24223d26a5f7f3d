#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "relm/errors.hpp"

namespace relm {

/// Worker count: the requested value (0 = one per hardware thread), capped by
/// the RELM_WORKERS environment variable when it holds a positive integer.
inline unsigned resolve_workers(unsigned requested = 0) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  unsigned n = requested == 0 ? hw : requested;
  if (const char* env = std::getenv("RELM_WORKERS")) {
    unsigned cap = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec == std::errc{} && ptr == s.data() + s.size() && cap > 0) n = std::min(n, cap);
  }
  return std::max(1u, n);
}

/// Runs body(index, worker) for index in [0, count) on up to `workers`
/// threads with dynamic assignment. The calling thread is worker 0. The first
/// exception thrown by any body is rethrown after all workers stop.
template <class Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body) {
  if (count == 0) return;
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), count));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) body(k, 0u);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto drain = [&](unsigned worker) {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t k = next.fetch_add(1, std::memory_order_relaxed);
      if (k >= count) break;
      try {
        body(k, worker);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  try {
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(drain, w);
  } catch (const std::system_error& e) {
    stop = true;
    pool.clear();
    throw ExecutionError(std::string("cannot start worker threads: ") + e.what());
  }
  drain(0);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace relm
