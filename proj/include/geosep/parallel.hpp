#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace geosep {

inline void set_thread_count(int threads) {
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif
}

/// Runs body(i) for i in [0, count). Each index is visited exactly once;
/// callers write only to index-owned outputs so results are schedule-free.
/// If several iterations throw, the exception from the lowest index wins.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
    const auto n = static_cast<std::int64_t>(count);
    std::exception_ptr failure;
    std::int64_t failed_at = std::numeric_limits<std::int64_t>::max();
    std::mutex guard;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(guard);
            if (i < failed_at) {
                failed_at = i;
                failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace geosep
