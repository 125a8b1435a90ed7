#pragma once

#include <cstddef>
#include <functional>

namespace pseudoseg {

// Runs body(i) for i in [0, count) on up to `threads` worker threads.
// Work items are independent; callers write results into per-index slots so
// the output never depends on the thread count. threads <= 1 runs inline.
// The first exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

// Hardware concurrency clamped to at least 1.
int default_thread_count();

}  // namespace pseudoseg
