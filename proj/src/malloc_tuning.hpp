#pragma once

namespace myosub::detail {

// One-shot glibc malloc tuning; returns true so it can seed a static.
bool tune_malloc_for_large_buffers();

}  // namespace myosub::detail
