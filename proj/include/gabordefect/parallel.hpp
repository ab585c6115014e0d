#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace gabordefect {

/// Worker cap: GABORDEFECT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int worker_count();

namespace detail {
inline thread_local bool in_worker = false;
}

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the outcome does not depend on
/// scheduling. The first exception thrown by any worker is rethrown. Calls made
/// from inside a worker run serially on that worker.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers =
        detail::in_worker ? 1 : std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            detail::in_worker = true;
            try {
                for (std::size_t i = t; i < n; i += workers) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace gabordefect
