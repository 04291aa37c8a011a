#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace avatarforge {

// Runs fn(task) for task in [0, tasks) on up to `threads` workers. Worker w
// takes tasks w, w + threads, ...; each task runs exactly once and the first
// exception is rethrown after all workers join.
template <typename F>
void parallel_for(int tasks, int threads, F&& fn) {
  if (threads <= 1 || tasks <= 1) {
    for (int t = 0; t < tasks; ++t) fn(t);
    return;
  }
  const int workers = std::min(threads, tasks);
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int t = w; t < tasks; t += workers) fn(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace avatarforge
