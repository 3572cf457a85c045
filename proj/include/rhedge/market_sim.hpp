#pragma once

#include "rhedge/path_batch.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace rhedge {

struct BsParams {
    double s0 = 100.0;
    double drift = 0.0;
    double sigma = 0.2;
};

struct HestonParams {
    double s0 = 100.0;
    double v0 = 0.04;
    double mean_reversion = 1.0; ///< a
    double long_run_var = 0.04;  ///< b
    double vol_of_vol = 2.0;     ///< sigma
    double correlation = -0.7;   ///< rho
    double drift = 0.0;          ///< m
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double mid() const { return lo == hi ? lo : 0.5 * (lo + hi); }
};

struct GadParams {
    double s0 = 10.0;
    Interval a0, a1, b0, b1;
    double gamma = 1.0;
};

enum class ModelKind { BlackScholes, Heston, Gad };

struct MarketModelSpec {
    std::variant<BsParams, HestonParams, GadParams> params = BsParams{};
    double maturity_years = 30.0 / 365.0;
    int n_steps = 30;

    ModelKind kind() const {
        if (std::holds_alternative<BsParams>(params)) return ModelKind::BlackScholes;
        if (std::holds_alternative<HestonParams>(params)) return ModelKind::Heston;
        return ModelKind::Gad;
    }
    const BsParams& bs() const { return std::get<BsParams>(params); }
    const HestonParams& heston() const { return std::get<HestonParams>(params); }
    const GadParams& gad() const { return std::get<GadParams>(params); }
    double dt() const { return maturity_years / n_steps; }

    void validate() const; ///< throws std::invalid_argument on bad parameters
};

/// Exact log-normal stepping; sigma = 0 produces the deterministic drift path.
PathBatch simulate_bs(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed);

/// Full-truncation Euler on the variance, Euler on the price, correlated
/// increments, plus the derived "Vswap" track.
PathBatch simulate_heston(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed);

/// Variance-swap value on the simulation grid: running trapezium integral of
/// v plus the closed-form mean-reversion correction and the remaining-level
/// term.
std::vector<double> variance_swap_curve(std::span<const double> v_path,
                                        const MarketModelSpec& spec);

/// Reverse-mode adjoint of variance_swap_curve: given d(loss)/d(curve),
/// accumulates d(loss)/d(v) into dv (same length, += semantics).
void variance_swap_adjoint(std::span<const double> d_curve, const MarketModelSpec& spec,
                           std::span<double> dv);

/// Euler-Maruyama with interval-uniform parameter draws per path and step
/// (interval_mode on, the ROBUST dataset) or interval midpoints (off, the
/// FIX dataset). A negative diffusion base is clamped at 0 and counted in
/// batch.degenerate_steps.
PathBatch simulate_gad(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed,
                       bool interval_mode);

PathBatch simulate(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed,
                   bool gad_interval_mode = false);

/// k copies of the spec with every numeric parameter (s0 excluded) scaled by
/// its own uniform factor in [lo, hi]; correlation re-clamped to [-1,1],
/// non-negative parameters clamped at 0. BS and Heston only.
std::vector<MarketModelSpec> perturb_params_ood(const MarketModelSpec& spec, std::size_t k,
                                                double lo, double hi, std::uint64_t seed);

} // namespace rhedge
