#pragma once

#include <cstddef>
#include <functional>

namespace varreg {

// Number of worker threads to use. Reads VARREG_THREADS (positive integer);
// falls back to the hardware concurrency when unset or malformed.
int thread_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
// must write results to per-index slots and reduce them in index order
// afterwards so the outcome does not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace varreg
