#include "opaseg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace opaseg::parallel {

namespace {

std::atomic<int> g_override{0};

int env_threads() {
    const char* env = std::getenv("OPASEG_THREADS");
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (env != nullptr) {
        const int v = std::atoi(env);
        if (v >= 1) return std::min(v, hw);
    }
    return hw;
}

} // namespace

int max_threads() {
    const int o = g_override.load(std::memory_order_relaxed);
    if (o >= 1) return o;
    static const int from_env = env_threads();
    return from_env;
}

void set_threads(int n) {
    g_override.store(n < 1 ? 0 : n, std::memory_order_relaxed);
}

void parallel_for_ranges(std::int64_t n,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    const int threads = std::min<std::int64_t>(max_threads(), n);
    if (threads <= 1) {
        fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads) - 1);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto guarded = [&fn, &first_error, &error_mutex](std::int64_t b, std::int64_t e) {
        try {
            fn(b, e);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };
    for (int t = 1; t < threads; ++t) {
        const std::int64_t b = t * chunk;
        const std::int64_t e = std::min<std::int64_t>(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&guarded, b, e] { guarded(b, e); });
    }
    guarded(0, std::min<std::int64_t>(n, chunk));
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
    parallel_for_ranges(n, [&fn](std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) fn(i);
    });
}

} // namespace opaseg::parallel
