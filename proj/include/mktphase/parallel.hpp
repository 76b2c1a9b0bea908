#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mktphase {

inline unsigned resolve_threads(unsigned requested)
{
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
/// Work is split into contiguous blocks; fn must only write to slot i.
/// The first exception thrown by any task is rethrown after all workers join.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn)
{
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace mktphase
