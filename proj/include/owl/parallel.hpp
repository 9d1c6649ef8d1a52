#pragma once

#include <cstddef>
#include <functional>

namespace owl {

/// Worker cap: OWL_THREADS if set to a positive integer, otherwise the hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads. Every index runs even if
/// some throw; afterwards the exception of the lowest failing index is rethrown. Calls made
/// from inside a worker run inline on that worker.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace owl
