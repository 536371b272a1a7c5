#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace simhand {

inline int default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

/// Runs fn(begin, end) over fixed-size chunks of [0, count). Chunk boundaries
/// depend only on `grain`, never on the thread count, so any per-chunk output
/// written by index is identical for 1 or 8 threads.
void parallel_chunks(std::size_t count, std::size_t grain, int threads,
                     const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace simhand
