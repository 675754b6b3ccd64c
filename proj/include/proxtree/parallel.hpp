#pragma once

#include <cstddef>
#include <functional>

namespace proxtree {

// Upper bound on worker threads used by parallel_for. 0 restores the default
// (hardware concurrency).
void set_thread_limit(std::size_t threads);
std::size_t thread_limit();

// Runs body(i) for i in [0, count). Every index is executed exactly once;
// callers write results into index-addressed slots, so output never depends
// on the number of workers. Nested calls from inside a worker run serially.
// The first exception thrown by any body is rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace proxtree
