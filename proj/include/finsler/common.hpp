#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace finsler {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed expression, invalid metric file, bad CLI flags.
struct ConfigError : Error {
    using Error::Error;
};

/// Numerical breakdown at a point: singular metric, domain violation, order exhausted.
struct EvalError : Error {
    using Error::Error;
};

/// Internal consistency violation (an identity the pipeline itself guarantees failed).
struct InternalError : Error {
    using Error::Error;
};

struct Rational {
    long long num = 0;
    long long den = 1;

    void reduce() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
        if (num == 0) den = 1;
    }

    bool is_integer() const { return den == 1; }
    double as_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
};

/// Deterministic RNG used for sampling and tests. All transforms are spelled
/// out here (not delegated to std distributions) so that streams are
/// reproducible across standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (no spare caching, stream-stable).
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(gen_() % range);
    }

private:
    std::mt19937_64 gen_;
};

/// Index-sharded parallel loop. Work items write only to their own slot, so
/// results are independent of the thread count; exceptions are re-thrown on
/// the caller.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string fmt_double(double v, int precision = 17) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

inline double sqr(double v) { return v * v; }

}  // namespace finsler
