#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace lareqa {

inline std::size_t default_threads() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(worker, begin, end) over contiguous blocks of [0, n).
/// Blocks are claimed dynamically; fn must only write block-local state.
template <typename Fn>
void parallel_blocks(std::size_t n, std::size_t block, Fn&& fn,
                     std::size_t threads = default_threads()) {
  if (n == 0) return;
  const std::size_t blocks = (n + block - 1) / block;
  threads = std::min(threads, blocks);
  std::atomic<std::size_t> next{0};
  auto run = [&](std::size_t worker) {
    for (std::size_t b = next++; b < blocks; b = next++) {
      fn(worker, b * block, std::min(n, (b + 1) * block));
    }
  };
  if (threads <= 1) {
    run(0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          run(t);
        } catch (...) {
          errors[t] = std::current_exception();
          next = blocks;
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace lareqa
