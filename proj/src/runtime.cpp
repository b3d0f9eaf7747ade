#include "merit/runtime.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace merit::runtime {
namespace {

std::atomic<ComputeMode> g_mode{ComputeMode::deterministic};

int threads_from_env() {
    int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("MERIT_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) hw = std::min(hw, cap);
        } catch (...) {
        }
    }
    return hw;
}

// Dense kernels start serial until a caller opts into fast mode.
const bool g_initialised = [] {
    Eigen::setNbThreads(1);
    return true;
}();

}  // namespace

void set_compute_mode(ComputeMode mode) {
    g_mode = mode;
    const int n = thread_count();
    Eigen::setNbThreads(n);
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
}

ComputeMode compute_mode() { return g_mode; }

int thread_count() { return g_mode == ComputeMode::deterministic ? 1 : threads_from_env(); }

}  // namespace merit::runtime
