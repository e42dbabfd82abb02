#pragma once

#if defined(__GLIBC__) || __has_include(<malloc.h>)
#include <malloc.h>
#endif

namespace deeponet::util {

/// Keep large Eigen temporaries on the heap instead of fresh mmaps. Every training step
/// allocates and frees the same multi-hundred-KB blocks; with the default thresholds
/// glibc returns them to the kernel each time and the page faults cost ~40% of a run.
inline void keep_heap_warm() {
#if defined(M_MMAP_THRESHOLD) && defined(M_TRIM_THRESHOLD)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace deeponet::util
