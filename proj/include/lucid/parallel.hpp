#pragma once

#include <cstddef>
#include <functional>

namespace lucid {

/// Calls body(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots; the first exception is rethrown after all
/// threads join. workers <= 1 runs inline, in index order.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

/// Worker count from LUCID_WORKERS, else the hardware concurrency (at least 1).
std::size_t default_workers();

}  // namespace lucid
