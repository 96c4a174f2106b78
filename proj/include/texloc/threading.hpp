#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace texloc {

// Process-wide thread cap: --threads flag, else TEXLOC_THREADS, else
// hardware concurrency.
inline int& thread_cap() {
    static int cap = [] {
        if (const char* env = std::getenv("TEXLOC_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) return v;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }();
    return cap;
}

inline void set_thread_cap(int n) {
    if (n > 0) thread_cap() = n;
}

// Runs fn(i) for i in [0, n). Work items must be independent; each writes
// only its own output slot, so results do not depend on scheduling.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const int threads = std::min<int>(thread_cap(), static_cast<int>(n));
    if (threads <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const size_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace texloc
