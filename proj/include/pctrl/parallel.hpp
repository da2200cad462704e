#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace pctrl {

// Worker count from PCTRL_THREADS, else all cores.
std::size_t worker_threads();
void set_worker_threads(std::size_t n);  // 0 restores the default

// Runs fn(i) for i in [0, n). Each index writes only its own slot, so results
// do not depend on the thread count. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pctrl
