#pragma once

namespace qivc {

/// Raises the allocator's trim and mmap thresholds so freed blocks stay in
/// the heap. No-op off glibc.
void retain_heap_memory();

}  // namespace qivc
