#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace mscal {

/// Worker cap for parallel_for. 0 means hardware concurrency.
void set_max_threads(unsigned n);
unsigned max_threads();

namespace detail {
inline thread_local bool in_parallel_region = false;

struct RegionGuard {
    bool previous;
    RegionGuard() : previous(in_parallel_region) { in_parallel_region = true; }
    ~RegionGuard() { in_parallel_region = previous; }
};
}  // namespace detail

/// Runs fn(i) for i in [0, n). Work items must be independent and write only
/// to their own slots, so results do not depend on the schedule. If any item
/// throws, the exception from the lowest index is rethrown. Nested calls run
/// serially on the calling worker.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const unsigned workers =
        detail::in_parallel_region ? 1u : static_cast<unsigned>(std::min<std::size_t>(max_threads(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr failure;
    auto body = [&] {
        detail::RegionGuard guard;
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= n)
                return;
            try {
                fn(i);
            }
            catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w)
        pool.emplace_back(body);
    body();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

// Random streams ----------------------------------------------------------------

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent engine for (seed, stream), e.g. one per subject or replicate.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt = 0)
{
    return Rng(mix64(mix64(seed ^ mix64(salt)) + stream));
}

}  // namespace mscal
