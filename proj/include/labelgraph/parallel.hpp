#pragma once

#include <cstddef>
#include <functional>

namespace lg {

// Caps the number of worker threads used by parallel_for. 0 restores the
// default (hardware concurrency).
void set_max_threads(unsigned count);
unsigned max_threads();

// Runs body(begin, end) over disjoint contiguous chunks of [0, n). Chunks are
// independent; results must not depend on how the range is split.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace lg
