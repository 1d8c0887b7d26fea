#pragma once
#include <cstddef>
#include <functional>

namespace besovnet {

// BESOVNET_THREADS if set and positive, else hardware concurrency
std::size_t thread_count();

// fn(begin, end) over contiguous chunks; chunks never share outputs so results
// do not depend on the thread count
void parallel_chunks(std::size_t n, std::size_t chunk, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace besovnet
