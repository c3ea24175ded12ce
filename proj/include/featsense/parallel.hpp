#pragma once

#include <cstddef>
#include <functional>

namespace featsense {

/// Splits [0, n) into `workers` contiguous blocks and runs fn(worker, begin,
/// end) on one thread per block. workers <= 1 runs inline.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t worker, std::size_t begin, std::size_t end)>& fn);

}  // namespace featsense
