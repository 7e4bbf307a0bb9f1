#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace grade {

// Runs fn(i) for i in [0, count) on up to n_threads workers. Tasks write to
// disjoint slots indexed by i, so results are independent of the thread
// count and of scheduling.
inline void parallel_for(int count, int n_threads, const std::function<void(int)>& fn) {
    if (count <= 0) return;
    n_threads = std::max(1, std::min(n_threads, count));
    if (n_threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr error;
    auto worker = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace grade
