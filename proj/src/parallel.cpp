#include "elens/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "elens/errors.hpp"

namespace elens {

int resolve_workers(int requested) {
    int workers = requested;
    if (workers <= 0) {
        workers = static_cast<int>(std::thread::hardware_concurrency());
        if (workers < 1) workers = 1;
    }
    if (const char* env = std::getenv("EXCITE_LENS_THREADS")) {
        int cap = 0;
        try {
            size_t pos = 0;
            cap = std::stoi(env, &pos);
            if (pos != std::string(env).size()) cap = 0;
        } catch (const std::exception&) {
            cap = 0;
        }
        if (cap < 1) {
            throw ConfigError("EXCITE_LENS_THREADS must be a positive integer, got '" +
                              std::string(env) + "'");
        }
        if (cap < workers) workers = cap;
    }
    return workers;
}

void parallel_for(int64_t count, int workers, const std::function<void(int64_t)>& fn) {
    if (count <= 0) return;
    if (workers > count) workers = static_cast<int>(count);
    if (workers <= 1) {
        for (int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const int64_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace elens
