#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace carrygap {

// Static block decomposition of [0, n) across `workers` threads. Each index is
// processed exactly once and results must be written to preallocated slots, so
// output order (and therefore every artifact byte) is independent of the
// worker count. Exceptions are captured and rethrown on the caller thread.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers < 1) workers = 1;
  if (n == 0) return;
  if (workers == 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t w = std::min<std::size_t>(std::size_t(workers), n);
  std::vector<std::thread> threads;
  threads.reserve(w);
  std::mutex err_mu;
  std::exception_ptr err;
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      const std::size_t lo = n * t / w;
      const std::size_t hi = n * (t + 1) / w;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace carrygap
