#pragma once

#include <cstdint>
#include <functional>

namespace rcm {

// Process-wide worker cap (the CLI --threads flag). 1 means run inline.
void set_thread_count(int n);
int thread_count();

// Calls body(begin, end) on contiguous chunks covering [0, n). Chunk boundaries
// depend only on n, so per-item results never depend on the thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace rcm
