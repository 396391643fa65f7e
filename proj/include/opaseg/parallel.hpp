#pragma once

#include <cstdint>
#include <functional>

namespace opaseg::parallel {

// Number of worker threads. Defaults to hardware concurrency, capped by the
// OPASEG_THREADS environment variable. set_threads overrides both (tests use
// it to prove results are schedule-independent).
int max_threads();
void set_threads(int n); // n < 1 restores the default

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// thread, each processed in index order. Callers must only write to
// disjoint, index-determined locations; under that contract results are
// bit-identical for any thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

// Chunked variant: fn(begin, end) per contiguous range. Lower overhead for
// tight loops.
void parallel_for_ranges(std::int64_t n,
                         const std::function<void(std::int64_t, std::int64_t)>& fn);

} // namespace opaseg::parallel
