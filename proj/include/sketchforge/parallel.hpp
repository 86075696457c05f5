#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace sketchforge {

/// Execution policy shared by the rasteriser, encoder and optimiser.
/// `deterministic` forces serial reductions.
struct ExecPolicy {
    int threads = 1;
    bool deterministic = true;

    int workers() const { return deterministic ? 1 : std::max(1, threads); }
};

/// Splits [0, n) into `workers` contiguous chunks and runs fn(chunk, begin, end)
/// on each. Chunk boundaries depend only on n and workers.
template <typename Fn>
void parallel_chunks(std::size_t n, int workers, Fn&& fn) {
    const std::size_t k = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(workers), n));
    if (k <= 1) {
        fn(std::size_t{0}, std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t begin = n * i / k;
        const std::size_t end = n * (i + 1) / k;
        pool.emplace_back([&fn, i, begin, end] { fn(i, begin, end); });
    }
    for (auto& t : pool) t.join();
}

/// Number of chunks parallel_chunks will use.
inline std::size_t chunk_count(std::size_t n, int workers) {
    return std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n));
}

}  // namespace sketchforge
