#pragma once

#include <cstddef>
#include <functional>

namespace lpdh {

// Worker count for internal data parallelism. Reads LPDH_THREADS once;
// defaults to std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs body(begin, end) over a static partition of [0, n). Each index is
// handled by exactly one worker, so results never depend on the thread count
// as long as body writes only to index-owned outputs.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

} // namespace lpdh
