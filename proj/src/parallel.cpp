#include "hmore/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace hmore {

namespace {

std::atomic<int> g_override{0};

int default_thread_count() {
    static const int value = [] {
        if (const char* env = std::getenv("HMORE_THREADS")) {
            try {
                const int n = std::stoi(env);
                if (n >= 1) {
                    return n;
                }
            } catch (const std::exception&) {
            }
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return value;
}

}  // namespace

int thread_count() {
    const int o = g_override.load(std::memory_order_relaxed);
    return o >= 1 ? o : default_thread_count();
}

void set_thread_count(int n) { g_override.store(n >= 1 ? n : 0, std::memory_order_relaxed); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    if (n == 0) {
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }

    std::exception_ptr error;
    std::mutex error_mutex;
    auto run_block = [&](std::size_t begin, std::size_t end) {
        try {
            for (std::size_t i = begin; i < end; ++i) {
                body(i);
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = std::min(n, w * block);
        const std::size_t end = std::min(n, begin + block);
        threads.emplace_back(run_block, begin, end);
    }
    run_block(0, std::min(n, block));
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

double ordered_sum(std::size_t n, const std::function<double(std::size_t)>& body) {
    std::vector<double> terms(n);
    parallel_for(n, [&](std::size_t i) { terms[i] = body(i); });
    double total = 0.0;
    for (double t : terms) {
        total += t;
    }
    return total;
}

ScopedThreadCount::ScopedThreadCount(int n) : previous_(g_override.load()) { set_thread_count(n); }

ScopedThreadCount::~ScopedThreadCount() { g_override.store(previous_); }

}  // namespace hmore
