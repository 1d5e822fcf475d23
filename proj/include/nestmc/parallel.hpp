#pragma once

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace nestmc {

/// Worker count: explicit request, else NESTMC_THREADS, else hardware.
int resolve_threads(int requested);

/// Runs fn(block_index, begin, end) over [0, n) split into fixed-size blocks
/// and returns the per-block results in block order. The block partition is
/// independent of the worker count, so any order-sensitive reduction done
/// block-by-block afterwards is bitwise reproducible for 1, 2, ... workers.
template <class Partial, class Fn>
std::vector<Partial> parallel_blocks(std::int64_t n, std::int64_t block_size,
                                     int threads, Fn&& fn) {
    const std::int64_t n_blocks = (n + block_size - 1) / block_size;
    std::vector<Partial> partials(static_cast<std::size_t>(n_blocks));
    if (n_blocks == 0)
        return partials;

    threads = resolve_threads(threads);
    if (threads > n_blocks)
        threads = static_cast<int>(n_blocks);

    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_blocks)
                return;
            const std::int64_t begin = b * block_size;
            const std::int64_t end = std::min(n, begin + block_size);
            partials[static_cast<std::size_t>(b)] = fn(b, begin, end);
        }
    };

    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& th : pool)
            th.join();
    }
    return partials;
}

} // namespace nestmc
