#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace air {

// Runs fn(0..count-1) over at most `workers` threads. Callers keep results in
// index-addressed slots, so output order never depends on scheduling.
template <typename Fn>
void parallel_for_n(size_t count, int workers, Fn&& fn) {
    if (count == 0) return;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    for (auto& t : pool) t.join();
}

}  // namespace air
