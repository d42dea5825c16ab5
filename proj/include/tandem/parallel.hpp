#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tandem::detail {

inline unsigned default_thread_count() {
  static const unsigned value = [] {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("TANDEM_THREADS")) {
      long n = std::strtol(env, nullptr, 10);
      if (n >= 1 && n <= 256) hw = static_cast<unsigned>(n);
    }
    return hw;
  }();
  return value;
}

/// Test hook. 0 means "use the default".
inline unsigned& thread_count_override() {
  static unsigned v = 0;
  return v;
}

inline unsigned thread_count() {
  unsigned o = thread_count_override();
  return o ? o : default_thread_count();
}

/// Splits [0, n) into nb near-equal contiguous blocks and calls
/// fn(block, begin, end) for each, distributing blocks over worker threads.
/// The block layout depends only on (n, nb), so callers that keep one
/// accumulator per block and merge them in block order get results that do
/// not depend on the number of threads.
template <typename Fn>
void parallel_blocks(std::size_t n, std::size_t nb, Fn&& fn) {
  if (n == 0) return;
  nb = std::min(nb, n);
  if (nb == 0) nb = 1;
  const auto block_begin = [n, nb](std::size_t b) { return b * n / nb; };

  unsigned threads = std::min<std::size_t>(thread_count(), nb);
  if (threads <= 1) {
    for (std::size_t b = 0; b < nb; ++b) fn(b, block_begin(b), block_begin(b + 1));
    return;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t b = next.fetch_add(1);
      if (b >= nb) break;
      fn(b, block_begin(b), block_begin(b + 1));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

/// Number of sample blocks used by the batched layer kernels.
inline constexpr std::size_t kSampleBlocks = 16;

}  // namespace tandem::detail
