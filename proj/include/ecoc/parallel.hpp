#pragma once

#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ecoc {

/// Runs f(i) for i in [0, n) on up to `threads` workers with a fixed
/// strided assignment. Callers write results to per-index slots, so the
/// outcome does not depend on scheduling. The first worker exception is
/// rethrown after all workers finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  if (threads > n) threads = n;
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace ecoc
