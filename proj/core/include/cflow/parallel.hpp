#pragma once

#include <cstddef>
#include <functional>

namespace cflow {

// Worker cap: min(hardware threads, COUPLEDFLOW_THREADS when set).
std::size_t worker_count();

// Runs body(i) for i in [0, n). Bodies must write only to their own output
// slot; callers reduce the slots afterwards in fixed index order, so results
// are identical to the serial schedule regardless of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cflow
