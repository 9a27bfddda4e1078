#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace dopl {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exception types need default visibility so they can be caught across the
// shared-module boundary when the python extension is built with hidden
// symbol visibility.
#if defined(__GNUC__) || defined(__clang__)
#define DOPL_EXPORT __attribute__((visibility("default")))
#else
#define DOPL_EXPORT
#endif

/// Error raised when inputs violate a documented precondition.
class DOPL_EXPORT invalid_input : public std::runtime_error {
public:
    explicit invalid_input(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error raised when a computation hits a numerically singular configuration.
class DOPL_EXPORT numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Compensated (Kahan) accumulator for long mixed-sign sums.
class KahanSum {
public:
    void add(double x) {
        double y = x - c_;
        double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

private:
    double s_ = 0.0;
    double c_ = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-unit RNG stream derived from (seed, stream id). Generation order is
/// independent of how units are scheduled across workers.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ed270b7a4fULL)));
}

}  // namespace dopl
