#pragma once

#include <cstdint>
#include <functional>

namespace msdc {

/// Worker count for internal data parallelism. Read once from MSDC_THREADS
/// (1 selects the single-threaded deterministic mode); defaults to the
/// hardware concurrency.
int thread_count();

/// Overrides the worker count for the rest of the process (tests, CLI).
void set_thread_count(int n);

/// Runs fn(i) for i in [0, n). Each index must write disjoint outputs, so
/// results do not depend on the number of workers.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace msdc
