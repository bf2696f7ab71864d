#pragma once

#include <cstdint>
#include <functional>

namespace elens {

// requested == 0 means hardware concurrency; the EXCITE_LENS_THREADS
// environment variable, when set, caps the result. A malformed or
// non-positive cap raises ConfigError.
int resolve_workers(int requested);

// Runs fn(0..count-1) on up to `workers` threads. Index assignment is
// dynamic, so fn must write only to its own slot; the first exception is
// rethrown on the calling thread after all workers join.
void parallel_for(int64_t count, int workers, const std::function<void(int64_t)>& fn);

}  // namespace elens
