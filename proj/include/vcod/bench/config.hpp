#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vcod/errors.hpp"
#include "vcod/pseudolabel.hpp"

namespace vcod::bench {

enum class EvalMode { annotated_only, with_pseudo };
enum class ReportFormat { csv, markdown, both };

struct RunConfig {
    EvalMode mode = EvalMode::annotated_only;
    double threshold = 0.5;
    ConsistencyParams consistency{};
    ReportFormat format = ReportFormat::both;
    std::size_t threads = 1;

    void validate() const {
        if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("threshold must lie in (0,1)");
        if (!(consistency.alpha >= 0.0) || !(consistency.beta >= 0.0)) throw InputError("alpha and beta must be >= 0");
        if (threads == 0) throw InputError("threads must be at least 1");
    }
};

// Runs body(i) for i in [0, n) on up to `threads` workers. The first
// exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace vcod::bench
