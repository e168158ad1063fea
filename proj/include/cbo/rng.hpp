#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cbo {

using Rng = std::mt19937_64;

//! Stateless 64-bit mixer (splitmix64 finaliser).  Used to derive independent
//! stream seeds from a master seed plus a stream tag, so that every worker can
//! rebuild its own generator without sharing state.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

//! FNV-1a hash of a string, for deriving seeds from identifiers.
inline std::uint64_t hash_name(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

//! Uniform double in [0, 1).
inline double uniform01(Rng& rng) {
    // 53-bit mantissa construction; avoids distribution-object state.
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

//! Single standard-normal draw via Box-Muller.  Stateless (no cached spare),
//! so draw sequences are reproducible independent of call-site batching.
inline double normal01(Rng& rng) {
    double u1 = 0.0;
    do {
        u1 = uniform01(rng);
    } while (u1 <= 0.0);
    const double u2 = uniform01(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

//! Fills column-major: all rows of column 0 first, then column 1, ...
inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            m(r, c) = normal01(rng);
    return m;
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, Rng& rng) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal01(rng);
    return v;
}

inline Eigen::VectorXd uniform_vector(Eigen::Index n, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
    return v;
}

//! Draws k distinct indices from {0, ..., n-1} (partial Fisher-Yates).
//! k == n yields a permutation, which makes full-batch sub-sampling visit
//! every index exactly once.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n - i));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace cbo
