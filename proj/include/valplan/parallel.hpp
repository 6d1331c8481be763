#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace valplan {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is handled
/// exactly once; callers write results into per-index slots so that output
/// never depends on the worker count. The exception thrown by the lowest
/// failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = std::max(1u, workers);
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(workers, n);
    std::vector<std::exception_ptr> errors(nthreads);
    std::vector<std::size_t> failed_at(nthreads, n);
    std::vector<std::thread> threads;
    threads.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        threads.emplace_back([&, t] {
            const std::size_t lo = n * t / nthreads;
            const std::size_t hi = n * (t + 1) / nthreads;
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                    failed_at[t] = i;
                    return;
                }
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    std::size_t first = n;
    std::exception_ptr err;
    for (std::size_t t = 0; t < nthreads; ++t) {
        if (errors[t] && failed_at[t] < first) {
            first = failed_at[t];
            err = errors[t];
        }
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

}  // namespace valplan
