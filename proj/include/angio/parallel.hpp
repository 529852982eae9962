#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace angio {

// Runs fn(i) for i in [0, n). Each index is processed exactly once; workers
// get contiguous chunks. Callers must only write to per-index slots, which
// makes the result independent of the worker count. Reductions over the slots
// are then done serially in index order by the caller.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t k = static_cast<std::size_t>(workers);
    if (k > n) k = n;
    std::vector<std::thread> pool;
    pool.reserve(k);
    std::size_t chunk = (n + k - 1) / k;
    for (std::size_t w = 0; w < k; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = lo + chunk < n ? lo + chunk : n;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace angio
