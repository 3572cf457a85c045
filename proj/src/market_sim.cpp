#include "rhedge/market_sim.hpp"

#include "rhedge/numeric.hpp"
#include "rhedge/rng.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace rhedge {

namespace {

void check_interval(const Interval& iv, const char* name) {
    if (iv.lo > iv.hi)
        throw std::invalid_argument(std::string("MarketModelSpec: interval ") + name +
                                    " has lower > upper");
}

} // namespace

void MarketModelSpec::validate() const {
    if (n_steps < 1) throw std::invalid_argument("MarketModelSpec: n_steps >= 1 required");
    if (!(maturity_years > 0.0))
        throw std::invalid_argument("MarketModelSpec: maturity must be positive");
    switch (kind()) {
    case ModelKind::BlackScholes:
        if (bs().sigma < 0.0) throw std::invalid_argument("BS: sigma must be non-negative");
        if (!(bs().s0 > 0.0)) throw std::invalid_argument("BS: s0 must be positive");
        break;
    case ModelKind::Heston: {
        const auto& h = heston();
        if (h.vol_of_vol < 0.0) throw std::invalid_argument("Heston: sigma must be non-negative");
        if (h.v0 < 0.0) throw std::invalid_argument("Heston: v0 must be non-negative");
        if (!(h.mean_reversion > 0.0)) throw std::invalid_argument("Heston: a must be positive");
        if (h.long_run_var < 0.0) throw std::invalid_argument("Heston: b must be non-negative");
        if (h.correlation < -1.0 || h.correlation > 1.0)
            throw std::invalid_argument("Heston: rho must lie in [-1,1]");
        if (!(h.s0 > 0.0)) throw std::invalid_argument("Heston: s0 must be positive");
        break;
    }
    case ModelKind::Gad: {
        const auto& g = gad();
        check_interval(g.a0, "a0");
        check_interval(g.a1, "a1");
        check_interval(g.b0, "b0");
        check_interval(g.b1, "b1");
        if (!(g.gamma > 0.0) || g.gamma > 1.0)
            throw std::invalid_argument("GAD: gamma must lie in (0,1]");
        break;
    }
    }
}

PathBatch simulate_bs(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed) {
    if (spec.kind() != ModelKind::BlackScholes)
        throw std::invalid_argument("simulate_bs: spec is not a Black-Scholes variant");
    if (n == 0) throw std::invalid_argument("simulate_bs: n must be positive");
    spec.validate();

    const auto& p = spec.bs();
    const std::size_t T = static_cast<std::size_t>(spec.n_steps);
    const double dt = spec.dt();
    const double drift_coeff = p.drift - 0.5 * p.sigma * p.sigma;
    const double vol_term = p.sigma * std::sqrt(dt);

    // Exact log-normal solution evaluated per date: the drift enters as
    // drift_coeff * t * dt rather than a compounded per-step factor, so the
    // zero-volatility limit reproduces s0 * exp(m t dt) to the last bit.
    PathBatch batch = PathBatch::zeros(n, {"S"}, T, dt);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            batch.at(i, 0, 0) = p.s0;
            double brownian = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                brownian += counter_normal(seed, i, t, 0);
                batch.at(i, 0, t + 1) =
                    p.s0 * std::exp(drift_coeff * static_cast<double>(t + 1) * dt +
                                    vol_term * brownian);
            }
        }
    });
    return batch;
}

std::vector<double> variance_swap_curve(std::span<const double> v_path,
                                        const MarketModelSpec& spec) {
    const auto& h = spec.heston();
    if (!(h.mean_reversion > 0.0))
        throw std::invalid_argument("variance_swap_curve: mean reversion a must be positive");
    const std::size_t m = v_path.size();
    const double dt = spec.dt();
    const double T = spec.maturity_years;
    std::vector<double> curve(m);
    double integral = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        if (j > 0) integral += 0.5 * dt * (v_path[j - 1] + v_path[j]);
        const double tau = T - static_cast<double>(j) * dt;
        const double correction =
            (v_path[j] - h.long_run_var) / h.mean_reversion * (1.0 - std::exp(-h.mean_reversion * tau));
        curve[j] = integral + correction + h.long_run_var * tau;
    }
    return curve;
}

void variance_swap_adjoint(std::span<const double> d_curve, const MarketModelSpec& spec,
                           std::span<double> dv) {
    const auto& h = spec.heston();
    const std::size_t m = d_curve.size();
    if (dv.size() != m) throw std::invalid_argument("variance_swap_adjoint: size mismatch");
    const double dt = spec.dt();
    const double T = spec.maturity_years;

    // curve[j] = dt*(v0/2 + v1 + ... + v_{j-1} + v_j/2) + (v_j-b)/a*(1-e^{-a*tau_j}) + b*tau_j
    // v_k (k>=1) enters integrals j>=k: weight dt/2 at j=k, dt for j>k.
    // v_0 enters with weight dt/2 for every j>=1.
    double suffix = 0.0; // sum of d_curve[j] for j > k, built from the tail
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t k = m - 1 - r;
        const double tau = T - static_cast<double>(k) * dt;
        const double corr_w = (1.0 - std::exp(-h.mean_reversion * tau)) / h.mean_reversion;
        if (k >= 1)
            dv[k] += dt * suffix + 0.5 * dt * d_curve[k] + corr_w * d_curve[k];
        else {
            // suffix here equals the sum over j >= 1
            dv[0] += 0.5 * dt * suffix + corr_w * d_curve[0];
        }
        suffix += d_curve[k];
    }
}

PathBatch simulate_heston(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed) {
    if (spec.kind() != ModelKind::Heston)
        throw std::invalid_argument("simulate_heston: spec is not a Heston variant");
    if (n == 0) throw std::invalid_argument("simulate_heston: n must be positive");
    spec.validate();

    const auto& p = spec.heston();
    const std::size_t T = static_cast<std::size_t>(spec.n_steps);
    const double dt = spec.dt();
    const double sqdt = std::sqrt(dt);
    const double rho_comp = std::sqrt(1.0 - p.correlation * p.correlation);

    PathBatch batch = PathBatch::zeros(n, {"S", "v", "Vswap"}, T, dt);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> v_path(T + 1);
        for (std::size_t i = lo; i < hi; ++i) {
            double s = p.s0;
            double v = p.v0;
            batch.at(i, 0, 0) = s;
            batch.at(i, 1, 0) = v;
            v_path[0] = v;
            for (std::size_t t = 0; t < T; ++t) {
                const double z1 = counter_normal(seed, i, t, 0);
                const double z2 = counter_normal(seed, i, t, 1);
                const double dw1 = sqdt * z1;
                const double dw2 = sqdt * (p.correlation * z1 + rho_comp * z2);
                const double v_plus = std::max(v, 0.0);
                const double sq_v = std::sqrt(v_plus);
                s += p.drift * s * dt + sq_v * s * dw1;
                v += p.mean_reversion * (p.long_run_var - v_plus) * dt + p.vol_of_vol * sq_v * dw2;
                batch.at(i, 0, t + 1) = s;
                batch.at(i, 1, t + 1) = v; // stored unclipped
                v_path[t + 1] = v;
            }
            const std::vector<double> swap = variance_swap_curve(v_path, spec);
            for (std::size_t t = 0; t <= T; ++t) batch.at(i, 2, t) = swap[t];
        }
    });
    return batch;
}

PathBatch simulate_gad(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed,
                       bool interval_mode) {
    if (spec.kind() != ModelKind::Gad)
        throw std::invalid_argument("simulate_gad: spec is not a GAD variant");
    if (n == 0) throw std::invalid_argument("simulate_gad: n must be positive");
    spec.validate();

    const auto& p = spec.gad();
    const std::size_t T = static_cast<std::size_t>(spec.n_steps);
    const double dt = spec.dt();
    const double sqdt = std::sqrt(dt);

    auto draw = [&](const Interval& iv, std::size_t i, std::size_t t, std::uint64_t stream) {
        if (!interval_mode) return iv.mid();
        return iv.lo + (iv.hi - iv.lo) * counter_uniform(seed, i, t, stream);
    };

    PathBatch batch = PathBatch::zeros(n, {"S"}, T, dt);
    std::atomic<std::uint64_t> clamped{0};
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        std::uint64_t local_clamped = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            double s = p.s0;
            batch.at(i, 0, 0) = s;
            for (std::size_t t = 0; t < T; ++t) {
                const double a0 = draw(p.a0, i, t, 1);
                const double a1 = draw(p.a1, i, t, 2);
                const double b0 = draw(p.b0, i, t, 3);
                const double b1 = draw(p.b1, i, t, 4);
                const double z = counter_normal(seed, i, t, 0);
                double base = a0 + a1 * s;
                if (base < 0.0) {
                    base = 0.0;
                    ++local_clamped;
                }
                s += (b0 + b1 * s) * dt + std::pow(base, p.gamma) * sqdt * z;
                batch.at(i, 0, t + 1) = s;
            }
        }
        clamped.fetch_add(local_clamped);
    });
    batch.degenerate_steps = clamped.load();
    return batch;
}

PathBatch simulate(const MarketModelSpec& spec, std::size_t n, std::uint64_t seed,
                   bool gad_interval_mode) {
    switch (spec.kind()) {
    case ModelKind::BlackScholes: return simulate_bs(spec, n, seed);
    case ModelKind::Heston: return simulate_heston(spec, n, seed);
    case ModelKind::Gad: return simulate_gad(spec, n, seed, gad_interval_mode);
    }
    throw std::logic_error("simulate: unknown model kind");
}

std::vector<MarketModelSpec> perturb_params_ood(const MarketModelSpec& spec, std::size_t k,
                                                double lo, double hi, std::uint64_t seed) {
    if (lo > hi) throw std::invalid_argument("perturb_params_ood: lo must be <= hi");
    if (spec.kind() == ModelKind::Gad)
        throw std::invalid_argument("perturb_params_ood: supported for BS and Heston only");
    spec.validate();

    auto factor = [&](std::size_t spec_idx, std::uint64_t param_idx) {
        return lo + (hi - lo) * counter_uniform(seed, spec_idx, param_idx, 0);
    };

    std::vector<MarketModelSpec> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        MarketModelSpec s = spec;
        if (spec.kind() == ModelKind::BlackScholes) {
            auto p = spec.bs();
            p.drift *= factor(i, 0);
            p.sigma = std::max(0.0, p.sigma * factor(i, 1));
            s.params = p;
        } else {
            auto p = spec.heston();
            p.v0 = std::max(0.0, p.v0 * factor(i, 0));
            p.mean_reversion = p.mean_reversion * factor(i, 1);
            p.long_run_var = std::max(0.0, p.long_run_var * factor(i, 2));
            p.vol_of_vol = std::max(0.0, p.vol_of_vol * factor(i, 3));
            p.correlation = std::clamp(p.correlation * factor(i, 4), -1.0, 1.0);
            p.drift *= factor(i, 5);
            s.params = p;
        }
        out.push_back(s);
    }
    return out;
}

} // namespace rhedge
