#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace ipa {

// Worker count for per-sample parallel evaluation. IPADAPT_THREADS caps it;
// 0 (the default) means serial. Each work item is internally serial and
// independently seeded, so the result set is identical either way.
inline int worker_count() {
    const char* env = std::getenv("IPADAPT_THREADS");
    if (!env) {
        return 0;
    }
    const int n = std::atoi(env);
    return n < 0 ? 0 : n;
}

template <class F>
void parallel_for(int n, F&& f) {
    const int workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) {
                f(i);
            }
        });
    }
    for (std::thread& t : threads) {
        t.join();
    }
}

}  // namespace ipa
