#pragma once

#include <cstdint>
#include <functional>

namespace met2net {

/// Number of worker threads in use. Resolved once from MET2NET_THREADS
/// (0 or 1 = single-threaded, unset = hardware concurrency).
int thread_count();

/// Force the pool size programmatically (tests). Must be called before the
/// first parallel_for, or between fully-drained calls.
void set_thread_count(int n);

/// Runs fn(begin, end) over fixed-size chunks of [0, n). Chunk geometry
/// depends only on n and grain, never on the thread count, so results that
/// are deterministic per-chunk are bitwise identical for any pool size.
void parallel_for(std::int64_t n, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace met2net
