#pragma once

#include <cstddef>
#include <functional>

namespace cir {

/// Global fan-out cap (the CLI's --threads). 0 resets to hardware concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs fn(begin, end) over contiguous ranges covering [0, n). Callers write
/// results into per-index slots so output never depends on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace cir
