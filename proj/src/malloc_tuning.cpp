// The kernel-matrix code allocates multi-megabyte temporaries at a high rate.
// glibc's default trim/mmap thresholds hand those pages back to the kernel on
// every free, so each training step pays page-fault costs larger than its
// arithmetic. Raising the thresholds keeps the blocks on the heap for reuse.
#include "malloc_tuning.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace myosub::detail {

bool tune_malloc_for_large_buffers() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
  return true;
}

}  // namespace myosub::detail
