#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace ediv {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Items must be
/// independent; results are identical for every worker count. The exception
/// of the lowest failing index is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// EDIV_WORKERS when set to a positive integer, else `configured` when
/// nonzero, else the hardware concurrency (at least 1).
std::size_t resolve_workers(std::size_t configured = 0);

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// kernel on every call. Training allocates and frees the same sizes each
/// step; with glibc defaults this costs one page-fault storm per step.
void tune_allocator();

}  // namespace ediv
