#pragma once

#include <cstddef>
#include <functional>

namespace camdiffuse {

// Runs fn(i) for i in [0, count) across `workers` threads with static
// striding. Every index is processed by exactly one thread, so per-index
// outputs are independent of the worker count. The first worker exception is
// rethrown on the calling thread.
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace camdiffuse
