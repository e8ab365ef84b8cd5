#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace myosub {

// Worker-thread cap: MYOSUB_THREADS if set, else hardware concurrency.
std::size_t thread_cap();

// Programmatic override (used by the scalability harness to pin one thread).
// std::nullopt restores the environment-derived cap.
void set_thread_cap(std::optional<std::size_t> cap);

// Runs fn(begin, end) over fixed-size chunks of [0, count). Chunk boundaries
// depend only on `grain`, never on the thread count, and chunks must write to
// disjoint outputs; results are then identical for any MYOSUB_THREADS value.
void parallel_for_chunks(std::size_t count, std::size_t grain,
                         const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace myosub
