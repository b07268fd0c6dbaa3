#pragma once

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace rz {

/// Grid coordinate of a raster cell.
struct Site {
    int row = 0;
    int col = 0;

    auto operator<=>(const Site&) const = default;
};

/// Raised when an input file does not follow its declared format.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an operation is called outside its contract.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw PreconditionError(message);
    }
}

/// Worker count from RZ_THREADS, falling back to the hardware concurrency.
std::size_t thread_count();

/// SplitMix64 finalizer; used to derive independent seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t site_seed(std::uint64_t master, Site site) {
    std::uint64_t h = mix_seed(master);
    h = mix_seed(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(site.row)));
    h = mix_seed(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(site.col)) << 32));
    return h;
}

/// Runs body(i) for i in [0, n) on up to thread_count() workers. Results
/// must be written to per-index slots; the first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(n);
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back(run);
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace rz
