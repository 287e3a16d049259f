#pragma once

#include <cstddef>
#include <functional>

namespace d2a2 {

/// Worker cap read from D2A2_THREADS (default 1). Values < 1 are treated as 1.
int worker_count();
/// Overrides the environment setting for this process; 0 restores it.
void set_worker_count(int workers);

/// Runs body(i) for i in [0, count). Each index is visited by exactly one worker,
/// so bodies that write disjoint outputs per index are race-free and the result
/// does not depend on the worker count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace d2a2
