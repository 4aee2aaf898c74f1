#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace eegnn {

/// Worker cap: EEGNN_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs task(i) for i in [0, count) on up to worker_count() threads. Results
/// are stored by index so the output order never depends on scheduling. The
/// first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

template <class T, class F>
std::vector<T> parallel_map(std::size_t count, F&& fn) {
  std::vector<T> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace eegnn
