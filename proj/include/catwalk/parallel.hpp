#pragma once

// Chunked parallel loops with a fixed chunk layout. Chunk boundaries depend
// only on the item count, and callers merge per-chunk partial results in chunk
// order, so results are bitwise identical for any thread count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace catwalk {

inline std::atomic<unsigned>& thread_count_setting() {
  static std::atomic<unsigned> n{std::max(1u, std::thread::hardware_concurrency())};
  return n;
}

inline void set_thread_count(unsigned n) { thread_count_setting() = std::max(1u, n); }
inline unsigned thread_count() { return thread_count_setting(); }

inline constexpr std::size_t kChunkSize = 2048;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kChunkSize) {
  return (n + chunk - 1) / chunk;
}

// Calls fn(chunk_index, begin, end) for every chunk of [0, n).
template <typename Fn>
void for_each_chunk(std::size_t n, Fn&& fn, std::size_t chunk = kChunkSize) {
  const auto chunks = chunk_count(n, chunk);
  const auto workers = std::min<std::size_t>(thread_count(), chunks);
  auto run = [&](std::size_t c) { fn(c, c * chunk, std::min(n, (c + 1) * chunk)); };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
        try {
          run(c);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Parallel map over independent items (one chunk per item).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  for_each_chunk(n, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  }, 1);
}

}  // namespace catwalk
