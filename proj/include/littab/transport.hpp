#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "littab/errors.hpp"

namespace littab {

// Exponential backoff with full jitter. Attempt k (0-based) may wait up to
// base * multiplier^k; the actual delay is uniform in [0, cap].
struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double multiplier = 2.0;

    std::chrono::milliseconds cap_for_attempt(int attempt) const {
        double cap = static_cast<double>(base_delay.count());
        for (int i = 0; i < attempt; ++i) cap *= multiplier;
        return std::chrono::milliseconds(static_cast<std::int64_t>(cap));
    }
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

inline void default_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

// Runs fn until it succeeds or a non-transient error escapes. Only
// GatewayError{transient} is retried; the final transient failure is
// rethrown once attempts are exhausted.
template <typename Fn>
auto with_retry(Fn&& fn, const RetryPolicy& policy, std::mt19937_64& rng,
                const SleepFn& sleep = default_sleep) -> decltype(fn()) {
    for (int attempt = 0;; ++attempt) {
        try {
            return fn();
        } catch (const GatewayError& e) {
            if (e.kind() != FailKind::transient || attempt + 1 >= policy.max_attempts) throw;
            const auto cap = policy.cap_for_attempt(attempt).count();
            std::uniform_int_distribution<std::int64_t> jitter(0, cap);
            sleep(std::chrono::milliseconds(jitter(rng)));
        }
    }
}

// Applies fn to every index in [0, n) with at most max_in_flight running at
// once. Results land at their input index; the first exception is rethrown
// after all workers drain.
template <typename R>
std::vector<R> parallel_map(std::size_t n, std::size_t max_in_flight,
                            const std::function<R(std::size_t)>& fn) {
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    std::vector<R> results(n);
    if (n == 0) return results;

    const std::size_t workers = std::min(max_in_flight, n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mu;

    auto body = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n) break;
            try {
                results[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(workers > 0 ? workers - 1 : 0);
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();

    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace littab
