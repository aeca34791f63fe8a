#pragma once

#include <cstddef>
#include <functional>

namespace phasor_forge {

// Worker cap. Defaults to PHASOR_FORGE_THREADS, else hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n) over up to thread_count() workers using a static
// contiguous partition. Work items must be independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace phasor_forge
