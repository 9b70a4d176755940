#pragma once

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gibbsforge {

using cx = std::complex<double>;
using VecR = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;

constexpr cx kImag{0.0, 1.0};

// Default numerical policy, shared across modules.
constexpr double kTraceTol = 1e-12;
constexpr double kUnitaryTol = 1e-12;
constexpr double kPsdTol = 1e-10;
constexpr double kEigClip = 1e-14;            // floor for logs / square roots
constexpr std::size_t kDenseOperatorCap = std::size_t{1} << 16;
constexpr std::size_t kSectorDimCap = std::size_t{1} << 20;

// ============================================================================
// Errors
// ============================================================================

struct DimensionCapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BasisMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SectorViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SupportViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Combinatorics
// ============================================================================

/// binomial(n, k) with overflow check; throws std::overflow_error.
inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    std::uint64_t result = 1;
    for (int i = 0; i < k; ++i) {
        const std::uint64_t num = static_cast<std::uint64_t>(n - i);
        if (result > UINT64_MAX / num) throw std::overflow_error("binomial overflow");
        result = result * num / static_cast<std::uint64_t>(i + 1);
    }
    return result;
}

// ============================================================================
// Seeding
// ============================================================================

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child stream from (master, path). Streams for distinct paths are
/// statistically independent and reproducible regardless of worker count.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = master;
    std::uint64_t out = splitmix64(s);
    for (std::uint64_t p : path) {
        s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        out = splitmix64(s);
    }
    return out;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// ============================================================================
// Misc numeric helpers
// ============================================================================

inline bool approx_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

/// FNV-1a over a byte string; used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace gibbsforge
