#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dtbsm {

/// Number of workers to use when the caller passes threads <= 0.
inline int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(index, worker) for index in [0, n). Work items are claimed from a
/// shared counter, so callers must not depend on which worker runs an index.
/// The first exception thrown by any item is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const int workers =
        std::max(1, std::min<int>(threads <= 0 ? default_threads() : threads, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < n; i = next++) fn(i, w);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace dtbsm
