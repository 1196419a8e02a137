#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace rwpm {

// Runs fn(0..n_tasks-1), results indexed by task so the merge order never
// depends on scheduling. Each task derives its own rng stream from its index.
template <typename T, typename Fn>
std::vector<T> parallel_map(int n_tasks, int workers, Fn&& fn) {
    std::vector<T> results(static_cast<std::size_t>(n_tasks));
    if (workers <= 1 || n_tasks <= 1) {
        for (int i = 0; i < n_tasks; ++i) results[static_cast<std::size_t>(i)] = fn(i);
        return results;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= n_tasks) return;
            results[static_cast<std::size_t>(i)] = fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int k = std::min(workers, n_tasks);
    pool.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return results;
}

inline int default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace rwpm
