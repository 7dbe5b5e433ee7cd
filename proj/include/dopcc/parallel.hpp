#pragma once

#include <cstddef>
#include <functional>

namespace dopcc {

/// Worker count: explicit override if set, else CHART_THREADS, else hardware concurrency.
std::size_t thread_count();

/// Overrides the worker count for the process; 0 restores the default lookup.
void set_thread_count(std::size_t threads);

/// Runs body(i) for i in [0, n). Work is split into contiguous static blocks, so any body
/// that only writes to slot i yields results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dopcc
