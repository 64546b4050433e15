#pragma once

#include <cstddef>
#include <functional>

namespace splitkit {

// Runs fn(i) for i in [0, n).  Work is split into contiguous chunks across
// worker threads.  Each index is processed exactly once and the bodies must
// write to disjoint locations, so results are identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Thread count used by parallel_for.  Defaults to hardware_concurrency,
// overridable via set_thread_count (0 restores the default).
std::size_t thread_count();
void set_thread_count(std::size_t n);

}  // namespace splitkit
