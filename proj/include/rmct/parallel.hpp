#pragma once

#include <cstddef>
#include <functional>

namespace rmct {

/// Resolves a worker count: `requested` if positive, else the
/// RAYMARCH_CT_THREADS environment variable, else all hardware threads.
int resolve_threads(int requested);

/// Splits [0, n) into `workers` contiguous ranges and runs
/// fn(begin, end, worker) for each. The partition depends only on n and
/// workers, so per-worker reductions merged in worker order are reproducible.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t, std::size_t, int)>& fn);

}  // namespace rmct
