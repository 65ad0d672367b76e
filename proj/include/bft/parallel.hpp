#pragma once

#include <functional>

namespace bft {

/// Worker count: hardware concurrency, capped by BFT_THREADS when set.
int worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// rethrown on the calling thread (the first by index).
void parallel_for(int n, int workers, const std::function<void(int)>& body);

}  // namespace bft
