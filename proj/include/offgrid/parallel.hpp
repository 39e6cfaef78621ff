#pragma once

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/partitioner.h>

#include <algorithm>
#include <cstddef>

namespace offgrid {

/// Runs body(begin, end) over [0, count) split into fixed blocks of `block`
/// items. The block boundaries never depend on the number of worker threads,
/// so any kernel whose per-block result is computed in a fixed order yields
/// bitwise-identical output at every degree of parallelism.
template <class Body>
void for_each_block(std::ptrdiff_t count, std::ptrdiff_t block, Body&& body)
{
  if (count <= 0) {
    return;
  }
  const std::ptrdiff_t blocks = (count + block - 1) / block;
  if (blocks == 1) {
    body(std::ptrdiff_t{0}, count);
    return;
  }
  tbb::parallel_for(
      tbb::blocked_range<std::ptrdiff_t>(0, blocks, 1),
      [&](const tbb::blocked_range<std::ptrdiff_t>& r) {
        for (std::ptrdiff_t b = r.begin(); b != r.end(); ++b) {
          body(b * block, std::min(count, (b + 1) * block));
        }
      },
      tbb::simple_partitioner());
}

}  // namespace offgrid
