#pragma once

#include "rhedge/path_batch.hpp"

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace rhedge {

struct EuropeanCall {
    double strike = 100.0;
};
struct AsianPut {}; ///< at the money: strike is the (shared) initial price

using PayoffSpec = std::variant<EuropeanCall, AsianPut>;

struct Entropic {
    double risk_aversion = 1.0; ///< lambda > 0
};
struct Cvar {
    double alpha = 0.5; ///< confidence level in [0,1)
};
using RiskMeasureSpec = std::variant<Entropic, Cvar>;

struct CostSpec {
    double rate = 0.0; ///< proportional rate epsilon >= 0; 0 disables costs
};

void validate(const PayoffSpec& spec);
void validate(const RiskMeasureSpec& spec);
void validate(const CostSpec& spec);

/// Positions for N samples x r instruments x T hedging dates (t = 0..T-1).
struct DeltaArray {
    std::size_t n_samples = 0;
    std::size_t n_instruments = 0;
    std::size_t horizon = 0;
    std::vector<double> values;

    static DeltaArray zeros(std::size_t n, std::size_t r, std::size_t T) {
        return {n, r, T, std::vector<double>(n * r * T, 0.0)};
    }
    double& at(std::size_t n, std::size_t j, std::size_t t) {
        return values[(n * n_instruments + j) * horizon + t];
    }
    double at(std::size_t n, std::size_t j, std::size_t t) const {
        return values[(n * n_instruments + j) * horizon + t];
    }
};

/// Instrument track labels implied by the number of hedge instruments:
/// one instrument trades "S", two trade {"S","Vswap"}.
std::vector<std::string> default_instruments(std::size_t r);

Eigen::VectorXd payoff(const PayoffSpec& spec, const PathBatch& batch);

/// Terminal wealth per sample:
///   p0 + sum_t delta_t . (P_{t+1} - P_t)
///      - eps * sum_t P_t . |delta_t - delta_{t-1}|   (delta_{-1} = 0)
///      - payoff.
/// eps = 0 reproduces the frictionless book value exactly.
Eigen::VectorXd pnl(const DeltaArray& deltas, const PathBatch& batch, const PayoffSpec& payoff_spec,
                    const CostSpec& cost, double p0,
                    std::span<const std::string> instruments = {});

/// OCE integrand at a fixed threshold omega.
/// Entropic: omega - (1+log l)/l + exp(-l (z+omega)).
/// CVaR:     omega + max(-z-omega, 0)/(1-alpha).
double oce_pointwise_loss(const RiskMeasureSpec& measure, double pnl_value, double omega);

/// d(oce)/d(pnl) and d(oce)/d(omega); the CVaR kink takes the inactive-side
/// subgradient (0).
struct OceGrad {
    double d_pnl;
    double d_omega;
};
OceGrad oce_pointwise_grad(const RiskMeasureSpec& measure, double pnl_value, double omega);

struct RiskValue {
    double risk;
    double omega_star;
};

/// Solves the OCE infimum directly: closed form for entropic, the
/// ceil(alpha*N)-th order statistic of the losses for CVaR.
RiskValue risk_value(const RiskMeasureSpec& measure, std::span<const double> pnl_samples);

/// Mean over samples of the OCE integrand at fixed omega, p0 = 0.
double dh_loss_batch(const DeltaArray& deltas, const PathBatch& batch,
                     const PayoffSpec& payoff_spec, const CostSpec& cost,
                     const RiskMeasureSpec& measure, double omega);

} // namespace rhedge
