#pragma once

#include <cstddef>
#include <functional>

namespace prgauge {

/// Worker count: PRGAUGE_THREADS when set to a positive integer, else the hardware concurrency.
std::size_t worker_count();

/// Runs task(i) for i in [0, count) on up to worker_count() threads. Callers write results
/// into slot i so the output does not depend on scheduling. The first exception thrown by
/// any task is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace prgauge
