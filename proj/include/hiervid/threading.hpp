#pragma once

#include <cstdint>
#include <functional>

namespace hiervid {

// Kernel-parallelism cap. Reads HIERVID_THREADS once; 1 forces strictly
// sequential kernels. Parallel kernels only ever partition disjoint output
// ranges and reduce partials in a fixed order, so results are bitwise
// identical for every thread count.
int max_threads();

// Overrides the HIERVID_THREADS-derived cap (n <= 0 restores it).
void set_max_threads(int n);

// Splits [0, n) into contiguous chunks, one worker per chunk.
// fn(begin, end) must only write state owned by its range.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace hiervid
