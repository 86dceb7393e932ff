#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace icelab {

/// 0 means "one worker per hardware thread".
inline unsigned resolve_workers(unsigned requested) {
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on `workers` threads, handing out chunks
/// through an atomic counter. body must write only to slot i of its output,
/// which keeps results independent of the worker count and of scheduling.
template <class Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body, std::size_t chunk = 64) {
    workers = resolve_workers(workers);
    if (workers <= 1 || count <= chunk) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        try {
            for (;;) {
                const std::size_t begin = next.fetch_add(chunk);
                if (begin >= count) break;
                const std::size_t end = std::min(count, begin + chunk);
                for (std::size_t i = begin; i < end; ++i) body(i);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(count);
        }
    };
    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(workers, (count + chunk - 1) / chunk));
    std::vector<std::thread> pool;
    pool.reserve(n_threads - 1);
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(run);
    run();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace icelab
