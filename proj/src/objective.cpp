#include "rhedge/objective.hpp"

#include "rhedge/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rhedge {

namespace {
constexpr double kMaxExpArg = 700.0; // just under log(DBL_MAX)
}

void validate(const PayoffSpec& spec) {
    if (const auto* call = std::get_if<EuropeanCall>(&spec))
        if (!(call->strike > 0.0))
            throw std::invalid_argument("EuropeanCall: strike must be positive");
}

void validate(const RiskMeasureSpec& spec) {
    if (const auto* e = std::get_if<Entropic>(&spec)) {
        if (!(e->risk_aversion > 0.0))
            throw std::invalid_argument("Entropic: risk aversion must be positive");
    } else {
        const auto& c = std::get<Cvar>(spec);
        if (c.alpha < 0.0 || c.alpha >= 1.0)
            throw std::invalid_argument("Cvar: alpha must lie in [0,1)");
    }
}

void validate(const CostSpec& spec) {
    if (spec.rate < 0.0) throw std::invalid_argument("CostSpec: rate must be non-negative");
}

std::vector<std::string> default_instruments(std::size_t r) {
    if (r == 1) return {"S"};
    if (r == 2) return {"S", "Vswap"};
    throw std::invalid_argument("default_instruments: expected 1 or 2 hedge instruments");
}

Eigen::VectorXd payoff(const PayoffSpec& spec, const PathBatch& batch) {
    const std::size_t s_idx = static_cast<std::size_t>(batch.require_track("S"));
    const std::size_t N = batch.n_samples;
    const std::size_t T = batch.horizon_steps;
    Eigen::VectorXd out(N);
    if (const auto* call = std::get_if<EuropeanCall>(&spec)) {
        for (std::size_t n = 0; n < N; ++n)
            out(n) = std::max(batch.at(n, s_idx, T) - call->strike, 0.0);
    } else {
        for (std::size_t n = 0; n < N; ++n) {
            double avg = 0.0;
            for (std::size_t t = 1; t <= T; ++t) avg += batch.at(n, s_idx, t);
            avg /= static_cast<double>(T);
            out(n) = std::max(batch.at(n, s_idx, 0) - avg, 0.0);
        }
    }
    return out;
}

Eigen::VectorXd pnl(const DeltaArray& deltas, const PathBatch& batch, const PayoffSpec& payoff_spec,
                    const CostSpec& cost, double p0, std::span<const std::string> instruments) {
    validate(cost);
    const std::size_t N = batch.n_samples;
    const std::size_t T = batch.horizon_steps;
    const std::size_t r = deltas.n_instruments;
    if (deltas.n_samples != N || deltas.horizon != T)
        throw std::invalid_argument("pnl: deltas shape does not match batch");

    std::vector<std::string> default_tracks;
    if (instruments.empty()) {
        default_tracks = default_instruments(r);
        instruments = default_tracks;
    }
    if (instruments.size() != r)
        throw std::invalid_argument("pnl: instrument list does not match delta width");
    std::vector<std::size_t> track(r);
    for (std::size_t j = 0; j < r; ++j)
        track[j] = static_cast<std::size_t>(batch.require_track(instruments[j]));

    const Eigen::VectorXd claim = payoff(payoff_spec, batch);
    Eigen::VectorXd out(N);
    for (std::size_t n = 0; n < N; ++n) {
        double gains = 0.0;
        double costs = 0.0;
        for (std::size_t j = 0; j < r; ++j) {
            double prev_delta = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double d = deltas.at(n, j, t);
                const double p_t = batch.at(n, track[j], t);
                gains += d * (batch.at(n, track[j], t + 1) - p_t);
                costs += p_t * std::abs(d - prev_delta);
                prev_delta = d;
            }
        }
        out(n) = p0 + gains - cost.rate * costs - claim(n);
    }
    return out;
}

double oce_pointwise_loss(const RiskMeasureSpec& measure, double pnl_value, double omega) {
    if (const auto* e = std::get_if<Entropic>(&measure)) {
        const double l = e->risk_aversion;
        return omega - (1.0 + std::log(l)) / l + std::exp(-l * (pnl_value + omega));
    }
    const auto& c = std::get<Cvar>(measure);
    return omega + std::max(-pnl_value - omega, 0.0) / (1.0 - c.alpha);
}

OceGrad oce_pointwise_grad(const RiskMeasureSpec& measure, double pnl_value, double omega) {
    if (const auto* e = std::get_if<Entropic>(&measure)) {
        const double l = e->risk_aversion;
        const double w = l * std::exp(-l * (pnl_value + omega));
        return {-w, 1.0 - w};
    }
    const auto& c = std::get<Cvar>(measure);
    const bool active = (-pnl_value - omega) > 0.0; // subgradient 0 at the kink
    const double w = active ? 1.0 / (1.0 - c.alpha) : 0.0;
    return {-w, 1.0 - w};
}

RiskValue risk_value(const RiskMeasureSpec& measure, std::span<const double> pnl_samples) {
    validate(measure);
    const std::size_t N = pnl_samples.size();
    if (N == 0) throw std::invalid_argument("risk_value: need at least one sample");

    if (const auto* e = std::get_if<Entropic>(&measure)) {
        const double l = e->risk_aversion;
        double max_arg = -std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < N; ++n) {
            const double arg = -l * pnl_samples[n];
            if (arg > kMaxExpArg) {
                std::ostringstream os;
                os << "risk_value: exp overflow at sample " << n << " (exponent " << arg << ")";
                throw std::overflow_error(os.str());
            }
            max_arg = std::max(max_arg, arg);
        }
        std::vector<double> scaled(N);
        for (std::size_t n = 0; n < N; ++n) scaled[n] = std::exp(-l * pnl_samples[n] - max_arg);
        const double log_mean = max_arg + std::log(pairwise_mean(scaled));
        const double risk = log_mean / l;
        const double omega_star = risk + std::log(l) / l;
        return {risk, omega_star};
    }

    const auto& c = std::get<Cvar>(measure);
    std::vector<double> losses(pnl_samples.begin(), pnl_samples.end());
    for (double& z : losses) z = -z;
    std::sort(losses.begin(), losses.end());
    const std::size_t idx =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(c.alpha * static_cast<double>(N))));
    const double omega_star = losses[idx - 1];
    std::vector<double> excess(N);
    for (std::size_t n = 0; n < N; ++n) excess[n] = std::max(losses[n] - omega_star, 0.0);
    const double risk = omega_star + pairwise_mean(excess) / (1.0 - c.alpha);
    return {risk, omega_star};
}

double dh_loss_batch(const DeltaArray& deltas, const PathBatch& batch,
                     const PayoffSpec& payoff_spec, const CostSpec& cost,
                     const RiskMeasureSpec& measure, double omega) {
    const Eigen::VectorXd wealth = pnl(deltas, batch, payoff_spec, cost, 0.0);
    std::vector<double> losses(batch.n_samples);
    for (std::size_t n = 0; n < batch.n_samples; ++n)
        losses[n] = oce_pointwise_loss(measure, wealth(n), omega);
    return pairwise_mean(losses);
}

} // namespace rhedge
