#ifndef FRDL_COMMON_HPP
#define FRDL_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace frdl {

/// Problems with input data (missing files, malformed images, bad labels).
/// Mapped to CLI exit code 1.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration. Mapped to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss. Mapped to CLI exit code 3.
struct DivergenceError : std::runtime_error {
    DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
        : std::runtime_error(what), epoch(epoch), batch(batch) {}
    std::size_t epoch;
    std::size_t batch;
};

/// FNV-1a; used to derive per-sample RNG streams from string ids so results
/// do not depend on processing order or worker count.
constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1). Fixed 53-bit construction, so streams are
/// reproducible independent of the standard library's distributions.
inline double uniform01(Rng& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

/// Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
inline std::uint64_t uniform_index(Rng& g, std::uint64_t n) {
    const std::uint64_t limit = (~0ull / n) * n;
    std::uint64_t x;
    do {
        x = g();
    } while (x >= limit);
    return x % n;
}

/// Standard normal via Box-Muller (one value per call; the cosine branch).
inline double gaussian(Rng& g) {
    const double u1 = 1.0 - uniform01(g);
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

}  // namespace frdl

#endif
