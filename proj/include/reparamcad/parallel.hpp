#pragma once

#include <cstddef>
#include <functional>

namespace reparamcad {

/// Worker count: REPARAM_THREADS when set (>= 1), else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. The body
/// must only write to disjoint, per-index state. The first exception thrown
/// by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace reparamcad
