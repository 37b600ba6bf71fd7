#pragma once

#include <cstddef>
#include <functional>

namespace wqgamm {

/// Upper bound on worker threads used by library-level parallel loops.
/// 0 means "hardware concurrency". Defaults to 1.
void set_max_threads(unsigned threads);
unsigned max_threads();

/// Runs body(i) for i in [0, count). Each index is visited exactly once;
/// callers write into per-index slots so results do not depend on scheduling.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

}  // namespace wqgamm
