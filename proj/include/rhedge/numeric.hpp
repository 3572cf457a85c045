#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace rhedge {

/// Fixed-order pairwise (tree) summation. Used for every statistical
/// reduction so results do not depend on how the per-sample work was
/// scheduled.
double pairwise_sum(std::span<const double> xs);

inline double pairwise_mean(std::span<const double> xs) {
    return xs.empty() ? 0.0 : pairwise_sum(xs) / static_cast<double>(xs.size());
}

/// sign with sign(0) = 0, the tie rule used throughout the attack code.
inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Number of worker threads: ROBUST_HEDGE_THREADS if set, else 1.
int worker_threads();

/// Runs fn(begin, end) over [0, n) split into fixed-size chunks. Chunk
/// boundaries do not depend on the thread count, and each chunk writes
/// disjoint outputs, so results are identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

/// FNV-1a 64-bit content hash (non-cryptographic, provenance only).
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

} // namespace rhedge
