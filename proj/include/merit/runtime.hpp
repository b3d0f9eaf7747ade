#pragma once

namespace merit::runtime {

enum class ComputeMode {
    deterministic,  // serial kernels, fixed reduction order
    fast,           // row-parallel sparse kernels and threaded dense GEMM
};

// Process-wide. Fast mode honours MERIT_THREADS as an upper bound.
void set_compute_mode(ComputeMode mode);
ComputeMode compute_mode();
int thread_count();

}  // namespace merit::runtime
