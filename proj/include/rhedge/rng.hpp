#pragma once

#include <cstdint>

namespace rhedge {

// Stateless counter-based generator. Every variate is a pure function of
// (seed, a, b, stream), so per-path draws are reproducible independent of
// evaluation order or worker count. The mixer is the splitmix64 finalizer
// absorbing the key words one at a time.
//
// Stream allocation:
//   simulators       a = sample index, b = time step
//     stream 0       Brownian increment (first factor for Heston)
//     stream 1       second Heston factor
//     streams 1..4   GAD interval draws a0,a1,b0,b1
//   init_network     a = timestep block, b = layer slot, stream = flat index
//   perturb_params_ood  a = spec index, b = parameter index

std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                           std::uint64_t stream);

/// Uniform draw in the open interval (0,1).
double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                       std::uint64_t stream);

/// Standard normal via inverse CDF of the uniform draw.
double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                      std::uint64_t stream);

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley refinement against std::erfc; accurate to ~1e-15 on (0,1).
double inverse_normal_cdf(double u);

/// Standard normal CDF (used by tests and the Black-Scholes delta oracle).
double normal_cdf(double x);

} // namespace rhedge
