#pragma once

// Static-partition parallel loop.  Callers must write to disjoint slots, so
// results never depend on scheduling; KH_THREADS caps the pool size.

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace kh {

inline int thread_limit() {
    static const int limit = [] {
        unsigned hw = std::thread::hardware_concurrency();
        int n = hw ? static_cast<int>(hw) : 1;
        if (const char* env = std::getenv("KH_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) n = v;
        }
        return n;
    }();
    return limit;
}

// Runs f(i) for i in [0, n), partitioned into contiguous blocks.
template <class F>
void parallel_for(int n, F&& f) {
    int nthreads = std::min(thread_limit(), n);
    if (nthreads <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        int lo = static_cast<int>(static_cast<long long>(n) * t / nthreads);
        int hi = static_cast<int>(static_cast<long long>(n) * (t + 1) / nthreads);
        pool.emplace_back([&f, lo, hi] {
            for (int i = lo; i < hi; ++i) f(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace kh
