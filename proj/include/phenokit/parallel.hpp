#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace phenokit {

// Runs fn(i) for i in [0, count) on at most `workers` threads. Callers write
// results into per-index slots, so output order never depends on scheduling.
// The exception of the lowest failing index is rethrown after all threads join.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };

    std::vector<std::thread> pool;
    const std::size_t n = std::min(threads, count);
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace phenokit
