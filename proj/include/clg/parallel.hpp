#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace clg {

/// Worker count: CLG_THREADS if set, else the hardware concurrency.
inline std::size_t defaultThreads() {
    if (const char* env = std::getenv("CLG_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Run f(k) for k in [0, n) on up to `threads` workers. Tasks are claimed
/// dynamically; results must be written to slot k so the outcome does not
/// depend on scheduling. The exception of the lowest failing index is
/// rethrown after all workers stop.
template <typename F>
void parallelFor(std::size_t n, std::size_t threads, F&& f) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t k = 0; k < n; ++k) f(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex m;
    std::size_t failedAt = n;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= n) return;
            try {
                f(k);
            } catch (...) {
                std::lock_guard lock(m);
                if (k < failedAt) {
                    failedAt = k;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace clg
