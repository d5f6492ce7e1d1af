#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace bxi {

namespace detail {
inline std::atomic<unsigned>& worker_override() {
    static std::atomic<unsigned> value{0};
    return value;
}
} // namespace detail

// Programmatic worker-count override (0 restores the default resolution).
inline void set_worker_count(unsigned workers) { detail::worker_override() = workers; }

// Worker count: explicit override first, then BXI_WORKERS (clamped to
// >= 1), otherwise the hardware concurrency.
inline unsigned worker_count() {
    if (const unsigned v = detail::worker_override().load()) return v;
    if (const char* env = std::getenv("BXI_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
        return 1;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Evaluates fn(trial) for trial in [0, n) on `workers` threads and returns
// the results in trial order. fn must derive all randomness from the trial
// index, so the output is independent of scheduling; exceptions are
// rethrown (the first one, by trial index) after all workers finish.
template <class T, class Fn>
std::vector<T> parallel_map(std::uint64_t n, Fn&& fn, unsigned workers = worker_count()) {
    std::vector<T> out(n);
    if (n == 0) return out;
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n));
    if (workers <= 1) {
        for (std::uint64_t i = 0; i < n; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::uint64_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::uint64_t first_error_trial = n;
    auto work = [&] {
        for (;;) {
            const std::uint64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (i < first_error_trial) {
                    first_error_trial = i;
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

// Pairwise (cascade) summation in index order: the result depends only on
// the sequence, never on the worker count.
inline double pairwise_sum(const double* data, std::size_t n) {
    if (n <= 32) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += data[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(v.data(), v.size());
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Sample mean and standard error via two deterministic pairwise passes.
inline MeanStderr mean_stderr(const std::vector<double>& v) {
    MeanStderr out;
    const std::size_t n = v.size();
    if (n == 0) return out;
    out.mean = pairwise_sum(v) / static_cast<double>(n);
    if (n < 2) return out;
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = v[i] - out.mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(n));
    return out;
}

} // namespace bxi
