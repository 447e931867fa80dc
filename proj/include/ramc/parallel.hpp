#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ramc {

/// Runs index-parallel loops on a fixed number of threads. Work is split into
/// contiguous chunks; callers write results into per-index slots, so output
/// never depends on the thread count.
class Executor {
public:
    explicit Executor(unsigned threads = 1) : threads_(std::max(1u, threads)) {}

    unsigned threads() const noexcept { return threads_; }

    template <class Fn>
    void for_each_index(std::size_t n, Fn&& fn) const
    {
        const std::size_t workers = std::min<std::size_t>(threads_, n);
        if (workers <= 1) {
            for (std::size_t i = 0; i < n; ++i) {
                fn(i);
            }
            return;
        }

        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            pool.emplace_back([&, begin, end] {
                try {
                    for (std::size_t i = begin; i < end; ++i) {
                        fn(i);
                    }
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            });
        }
        pool.clear();
        if (failure) {
            std::rethrow_exception(failure);
        }
    }

private:
    unsigned threads_;
};

} // namespace ramc
