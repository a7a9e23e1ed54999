#pragma once

#include <cstddef>
#include <functional>

namespace wfrdoc {

/// Worker count used when a caller passes 0: hardware concurrency, at least 1.
std::size_t default_threads();

/// Calls body(i) for i in [0, n) on up to `threads` workers (0 = default_threads()).
/// Each index runs exactly once; if any call throws, the exception from the
/// smallest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace wfrdoc
