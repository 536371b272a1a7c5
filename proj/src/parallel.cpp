#include "simhand/parallel.hpp"

#include <atomic>
#include <mutex>

namespace simhand {

void parallel_chunks(std::size_t count, std::size_t grain, int threads,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t n_chunks = (count + grain - 1) / grain;
  if (threads <= 0) threads = default_threads();
  const int n_workers = static_cast<int>(std::min<std::size_t>(threads, n_chunks));

  if (n_workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      fn(c * grain, std::min(count, (c + 1) * grain));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        fn(c * grain, std::min(count, (c + 1) * grain));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace simhand
