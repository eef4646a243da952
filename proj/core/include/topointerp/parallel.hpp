#pragma once

#include <cstddef>
#include <functional>

namespace topointerp {

/// Number of hardware threads, at least 1.
int available_threads();

/// Runs fn(worker, index) for index in [0, count) on `threads` workers.
/// Worker w handles indices w, w + threads, ... so the split depends only on
/// the thread count. threads <= 1 runs inline. The first exception thrown by
/// a worker is rethrown.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(int worker, std::size_t index)>& fn);

}  // namespace topointerp
