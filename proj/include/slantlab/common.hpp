#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace slantlab {

// Error taxonomy. ConfigError maps to CLI exit 2, MissingArtifactError to
// exit 3, everything else to exit 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct MissingArtifactError : Error {
    using Error::Error;
};

// FNV-1a, 64 bit. Used for embedding-file record keys, config hashes and
// artifact fingerprints. Not cryptographic.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// splitmix64: seed scrambler used to derive independent per-task seeds from a
// master seed. Derived streams are stable across schedulers.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t task_index) {
    return splitmix64(master ^ splitmix64(task_index + 1));
}

// Pairwise (cascade) summation in a fixed tree order. Reductions throughout
// the library use this so results do not depend on accumulation order.
// Deterministic RNG used by synthetic generation and bootstrap resampling.
// Distributions are hand-rolled on top of mt19937_64 so sampled streams do
// not depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

    uint64_t next_u64() {
        // xorshift* keeps the generator tiny and fully specified
        uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Marsaglia polar, spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Knuth's method; fine for the small rates used here
    int poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        int k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline double pairwise_sum(std::span<const double> xs) {
    const size_t n = xs.size();
    if (n <= 32) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const size_t half = n / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw DomainError("mean of empty range");
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

// Static-chunked parallel map over [0, n). Callers write results into
// preallocated index-addressed slots, so output is identical for any thread
// count.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t t_count = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (size_t t = 0; t < t_count; ++t) {
        pool.emplace_back([&, t] {
            const size_t lo = t * n / t_count;
            const size_t hi = (t + 1) * n / t_count;
            try {
                for (size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Sample standard deviation (n-1 denominator).
inline double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) throw DomainError("sd needs at least 2 values");
    const double m = mean_of(xs);
    std::vector<double> sq(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - m;
        sq[i] = d * d;
    }
    return std::sqrt(pairwise_sum(sq) / static_cast<double>(xs.size() - 1));
}

} // namespace slantlab
