#pragma once

#include <cstdint>
#include <functional>

namespace mkdm {

/// Upper bound on worker threads, read once from MKDM_THREADS (default 1).
int thread_count();

/// Overrides MKDM_THREADS for the rest of the process. Values < 1 clamp to 1.
void set_thread_count(int threads);

/// Runs fn(begin, end) over disjoint contiguous slices of [0, n). Each index is
/// handled by exactly one call, so per-row results do not depend on the split.
void parallel_rows(std::int64_t n, std::int64_t work_per_row,
                   const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace mkdm
