#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace winodds {

/// Resolves a requested worker count. 0 means: the WINODDS_WORKERS
/// environment variable if set, otherwise the hardware concurrency.
unsigned resolve_workers(unsigned requested);

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }
    void merge(const CompensatedSum& other) noexcept {
        add(other.sum_);
        add(other.comp_);
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Splits [0, n) into chunks whose boundaries depend only on n and
/// `chunk`, never on the worker count, and runs `body(chunk_index, begin,
/// end)` on up to `workers` threads. Callers that write per-chunk partial
/// results and merge them in chunk order get bit-identical reductions for
/// any worker count.
template <class Body>
void parallel_chunks(std::size_t n, std::size_t chunk, unsigned workers, Body&& body) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = (n + chunk - 1) / chunk;
    const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), nchunks));
    auto run = [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        body(c, begin, std::min(n, begin + chunk));
    };
    if (threads <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run(c);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            // static round-robin assignment; the result never depends on it
            for (std::size_t c = t; c < nchunks; c += threads) {
                try {
                    run(c);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Map-reduce over [0, n) with per-chunk partials merged in chunk order.
template <class T, class Map, class Merge>
T deterministic_reduce(std::size_t n, std::size_t chunk, unsigned workers, T init, Map&& map, Merge&& merge) {
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = n == 0 ? 0 : (n + chunk - 1) / chunk;
    std::vector<T> partial(nchunks, init);
    parallel_chunks(n, chunk, workers,
                    [&](std::size_t c, std::size_t begin, std::size_t end) { partial[c] = map(begin, end); });
    T acc = init;
    for (auto& part : partial) merge(acc, part);
    return acc;
}

}  // namespace winodds
