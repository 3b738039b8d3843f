#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace invberge {

// Chunked parallel loop over [0, n). Each worker owns a contiguous range and
// must write only to its own cells, so results are identical for any thread
// count. threads <= 1 runs inline.
template <typename Fn>
void parallel_for(std::int64_t n, int threads, Fn&& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    fn(std::int64_t{0}, n);
    return;
  }
  const std::int64_t workers =
      std::min<std::int64_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (std::int64_t w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace invberge
