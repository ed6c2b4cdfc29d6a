#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace netmix {

/// Upper bound on worker threads used by data-parallel loops (>= 1).
void set_max_threads(int n);
int max_threads();

/// Runs body(i) for i in [0, n). Indices are strided across workers; callers
/// write results into per-index slots and reduce in index order afterwards,
/// which keeps results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace netmix
