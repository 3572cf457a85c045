#include "rhedge/dist_attack.hpp"

#include "rhedge/numeric.hpp"

#include <cmath>
#include <stdexcept>

namespace rhedge {

namespace {

Eigen::MatrixXd signs_of(const Eigen::MatrixXd& g) {
    return g.unaryExpr([](double x) { return sign0(x); });
}

std::vector<std::size_t> resolve_tracks(const PathBatch& batch,
                                        std::span<const std::string> tracks) {
    std::vector<std::size_t> idx;
    for (const auto& label : tracks)
        idx.push_back(static_cast<std::size_t>(batch.require_track(label)));
    return idx;
}

void check_weights(std::span<const std::string> tracks, std::span<const double> weights) {
    if (weights.size() != tracks.size())
        throw std::invalid_argument("attack: weight list does not match track list");
    for (double w : weights)
        if (!(w > 0.0)) throw std::invalid_argument("attack: track weights must be positive");
}

/// Scaled gradients d(loss)/d(lambda_i X_i) = g_i / lambda_i, with frozen
/// time-0 components when requested.
std::vector<Eigen::MatrixXd> scaled_grads(const TrackGradients& grads,
                                          std::span<const double> weights, bool freeze_initial) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(grads.grads.size());
    for (std::size_t i = 0; i < grads.grads.size(); ++i) {
        Eigen::MatrixXd g = grads.grads[i] / weights[i];
        if (freeze_initial) g.col(0).setZero();
        out.push_back(std::move(g));
    }
    return out;
}

double p_from_q(double q) { return q / (q - 1.0); }

} // namespace

void AttackSpec::validate() const {
    if (radius < 0.0) throw std::invalid_argument("AttackSpec: radius must be >= 0");
    if (iterations < 1) throw std::invalid_argument("AttackSpec: iterations must be >= 1");
    if (!pointwise() && !(wasserstein_p > 1.0))
        throw std::invalid_argument("AttackSpec: Wasserstein order must exceed 1");
    if (radius > 0.0 && !(beta() > 0.0))
        throw std::invalid_argument("AttackSpec: step must be positive when radius is");
    if (tracks.empty()) throw std::invalid_argument("AttackSpec: no attacked tracks");
    if (!track_weights.empty()) check_weights(tracks, track_weights);
}

NetLossOracle::NetLossOracle(const HedgeNetwork& net, PayoffSpec payoff, CostSpec cost,
                             RiskMeasureSpec measure, std::vector<std::string> attacked_tracks)
    : net_(net), payoff_(std::move(payoff)), cost_(cost), measure_(std::move(measure)),
      tracks_(std::move(attacked_tracks)) {}

TrackGradients NetLossOracle::eval(const PathBatch& batch) const {
    GradientBundle bundle = loss_and_grads(net_, batch, payoff_, cost_, measure_, tracks_);
    TrackGradients out;
    out.loss = bundle.loss;
    out.tracks = bundle.attacked_tracks;
    out.grads = std::move(bundle.input_grads);
    return out;
}

void NetLossOracle::refresh_derived(PathBatch& batch) const {
    if (net_.layout.vswap && batch.has_track("Vswap") && batch.has_track("v"))
        refresh_vswap_track(*net_.layout.vswap, batch);
}

double dual_l1_norm(std::span<const double> g) {
    std::vector<double> absg(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) absg[i] = std::abs(g[i]);
    return pairwise_sum(absg);
}

double upsilon(const TrackGradients& grads, double q, std::span<const double> weights) {
    std::vector<double> defaults;
    if (weights.empty()) {
        defaults.assign(grads.grads.size(), 1.0);
        weights = defaults;
    }
    check_weights(grads.tracks, weights);
    const std::size_t n = grads.grads.empty() ? 0 : grads.grads.front().rows();
    if (n == 0) throw std::invalid_argument("upsilon: no samples");

    std::vector<double> terms;
    terms.reserve(n * grads.grads.size());
    for (std::size_t n_idx = 0; n_idx < n; ++n_idx)
        for (std::size_t i = 0; i < grads.grads.size(); ++i) {
            const double norm = grads.grads[i].row(n_idx).cwiseAbs().sum() / weights[i];
            terms.push_back(std::pow(norm, q));
        }
    return std::pow(pairwise_sum(terms) / static_cast<double>(n), 1.0 / q);
}

PerturbedBatch theorem1_step(const PathBatch& batch, const TrackGradients& grads, double delta,
                             double q, std::span<const double> weights, bool freeze_initial) {
    std::vector<double> defaults;
    if (weights.empty()) {
        defaults.assign(grads.tracks.size(), 1.0);
        weights = defaults;
    }
    check_weights(grads.tracks, weights);

    PerturbedBatch out;
    out.batch = batch;
    if (delta == 0.0) {
        out.achieved_distance = 0.0;
        return out;
    }

    const auto track_idx = resolve_tracks(batch, grads.tracks);
    const auto scaled = scaled_grads(grads, weights, freeze_initial);

    // Upsilon over the frozen gradients so the saturation identity holds.
    const std::size_t N = batch.n_samples;
    std::vector<double> terms;
    terms.reserve(N * scaled.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < scaled.size(); ++i)
            terms.push_back(std::pow(scaled[i].row(n).cwiseAbs().sum(), q));
    const double ups = std::pow(pairwise_sum(terms) / static_cast<double>(N), 1.0 / q);
    if (ups == 0.0) {
        out.no_op = true;
        out.warning = "theorem1_step: all input gradients vanish";
        out.achieved_distance = 0.0;
        return out;
    }

    const double ups_pow = std::pow(ups, 1.0 - q);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const std::size_t tk = track_idx[i];
        for (std::size_t n = 0; n < N; ++n) {
            const double norm = scaled[i].row(n).cwiseAbs().sum();
            const double magnitude =
                delta / weights[i] * std::pow(norm, q - 1.0) * ups_pow;
            for (std::size_t t = freeze_initial ? 1 : 0; t < batch.n_times(); ++t)
                out.batch.at(n, tk, t) += magnitude * sign0(scaled[i](n, t));
        }
    }
    out.achieved_distance =
        empirical_distance(batch, out.batch, p_from_q(q), grads.tracks, weights);
    return out;
}

double empirical_distance(const PathBatch& original, const PathBatch& perturbed, double p,
                          std::span<const std::string> tracks, std::span<const double> weights) {
    if (original.n_samples != perturbed.n_samples || original.n_times() != perturbed.n_times())
        throw std::invalid_argument("empirical_distance: shape mismatch");
    std::vector<double> defaults;
    if (weights.empty()) {
        defaults.assign(tracks.size(), 1.0);
        weights = defaults;
    }
    check_weights(tracks, weights);
    const auto orig_idx = resolve_tracks(original, tracks);
    const auto pert_idx = resolve_tracks(perturbed, tracks);

    const std::size_t N = original.n_samples;
    const std::size_t times = original.n_times();
    const bool inf_mode = std::isinf(p);
    std::vector<double> terms(inf_mode ? 0 : N);
    double max_dist = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        double acc = 0.0; // sum of (lambda*sup)^p, or max for p = inf
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            double sup = 0.0;
            for (std::size_t t = 0; t < times; ++t)
                sup = std::max(sup, std::abs(perturbed.at(n, pert_idx[i], t) -
                                             original.at(n, orig_idx[i], t)));
            const double scaled_sup = weights[i] * sup;
            if (inf_mode)
                acc = std::max(acc, scaled_sup);
            else
                acc += std::pow(scaled_sup, p);
        }
        if (inf_mode)
            max_dist = std::max(max_dist, acc);
        else
            terms[n] = acc;
    }
    if (inf_mode) return max_dist;
    return std::pow(pairwise_sum(terms) / static_cast<double>(N), 1.0 / p);
}

PerturbedBatch project_ball(const PathBatch& original, const PathBatch& perturbed, double delta,
                            double p, std::span<const std::string> tracks,
                            std::span<const double> weights, ProjectionMode mode) {
    std::vector<double> defaults;
    if (weights.empty()) {
        defaults.assign(tracks.size(), 1.0);
        weights = defaults;
    }
    const double dist = empirical_distance(original, perturbed, p, tracks, weights);
    PerturbedBatch out;
    if (dist == 0.0) {
        out.batch = original;
        out.achieved_distance = 0.0;
        return out;
    }
    const double factor = mode == ProjectionMode::ShrinkOnly ? std::min(1.0, delta / dist)
                                                             : std::max(1.0, delta / dist);
    out.batch = perturbed;
    if (factor != 1.0) {
        const auto orig_idx = resolve_tracks(original, tracks);
        const auto pert_idx = resolve_tracks(perturbed, tracks);
        for (std::size_t i = 0; i < tracks.size(); ++i)
            for (std::size_t n = 0; n < original.n_samples; ++n)
                for (std::size_t t = 0; t < original.n_times(); ++t) {
                    const double base = original.at(n, orig_idx[i], t);
                    out.batch.at(n, pert_idx[i], t) =
                        base + factor * (perturbed.at(n, pert_idx[i], t) - base);
                }
    }
    out.achieved_distance = empirical_distance(original, out.batch, p, tracks, weights);
    return out;
}

PerturbedBatch wpgd(const LossOracle& oracle, const PathBatch& batch, const AttackSpec& spec) {
    spec.validate();
    if (!(spec.radius > 0.0)) throw std::invalid_argument("wpgd: radius must be positive");
    const auto weights = spec.weights();
    const double q = spec.q();
    const double beta = spec.beta();

    PerturbedBatch out;
    out.batch = batch;
    for (int k = 0; k < spec.iterations; ++k) {
        const TrackGradients grads = oracle.eval(out.batch);
        out.trace.push_back({k, grads.loss,
                             empirical_distance(batch, out.batch, spec.wasserstein_p,
                                                spec.tracks, weights)});
        PerturbedBatch stepped =
            theorem1_step(out.batch, grads, beta, q, weights, spec.freeze_initial);
        if (stepped.no_op) {
            out.warning = "wpgd: zero gradient at iteration " + std::to_string(k);
            break;
        }
        PerturbedBatch projected = project_ball(batch, stepped.batch, spec.radius,
                                                spec.wasserstein_p, spec.tracks, weights,
                                                spec.projection);
        out.batch = std::move(projected.batch);
        oracle.refresh_derived(out.batch);
    }
    const TrackGradients final_grads = oracle.eval(out.batch);
    out.achieved_distance =
        empirical_distance(batch, out.batch, spec.wasserstein_p, spec.tracks, weights);
    out.trace.push_back({spec.iterations, final_grads.loss, out.achieved_distance});
    return out;
}

PerturbedBatch wbpgd(const LossOracle& oracle, const PathBatch& batch, const AttackSpec& spec) {
    spec.validate();
    if (!(spec.radius > 0.0)) throw std::invalid_argument("wbpgd: radius must be positive");
    const auto weights = spec.weights();
    const double q = spec.q();
    const double p = spec.wasserstein_p;
    const double beta = spec.beta();
    const std::size_t N = batch.n_samples;
    const std::size_t d = spec.tracks.size();
    const std::size_t times = batch.n_times();

    PerturbedBatch out;
    out.batch = batch;
    const auto track_idx = resolve_tracks(batch, spec.tracks);

    TrackGradients grads = oracle.eval(out.batch);
    out.trace.push_back({0, grads.loss, 0.0});

    // Lemma-2 state: zero budgets, directions along the initial gradient.
    // Each attacked trajectory carries its own budget, matching the
    // separate-sequence reduction of the multi-track perturbation.
    BudgetDirectionState state;
    state.budgets = Eigen::VectorXd::Zero(N * d);
    auto budget_at = [&](std::size_t n, std::size_t i) -> double& {
        return state.budgets(n * d + i);
    };
    {
        const auto scaled = scaled_grads(grads, weights, spec.freeze_initial);
        for (std::size_t i = 0; i < d; ++i) state.directions.push_back(signs_of(scaled[i]));
    }

    for (int k = 1; k <= spec.iterations; ++k) {
        const auto scaled = scaled_grads(grads, weights, spec.freeze_initial);

        // Directional derivatives w.r.t. budget and direction by chain rule.
        Eigen::MatrixXd gb(N, d);
        for (std::size_t i = 0; i < d; ++i)
            gb.col(i) = (scaled[i].array() * state.directions[i].array()).rowwise().sum();

        std::vector<double> terms(N * d);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < d; ++i)
                terms[n * d + i] = std::pow(std::abs(gb(n, i)), q);
        const double ups = std::pow(pairwise_sum(terms) / static_cast<double>(N), 1.0 / q);
        if (ups == 0.0) {
            out.warning = "wbpgd: zero budget gradient at iteration " + std::to_string(k);
            break;
        }
        const double ups_pow = std::pow(ups, 1.0 - q);

        // g^d = budget * gradient is taken at the pre-update state, so its
        // sign dies wherever the budget is still zero.
        const Eigen::VectorXd old_budgets = state.budgets;

        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < d; ++i) {
                const double g = gb(n, i);
                const double step =
                    beta * sign0(g) * std::pow(std::abs(g), q - 1.0) * ups_pow;
                budget_at(n, i) = std::max(0.0, budget_at(n, i) + step);
            }

        for (std::size_t i = 0; i < d; ++i) {
            Eigen::MatrixXd dir_step = signs_of(scaled[i]);
            for (std::size_t n = 0; n < N; ++n)
                if (old_budgets(n * d + i) == 0.0) dir_step.row(n).setZero();
            state.directions[i] =
                (state.directions[i] + (beta / spec.radius) * dir_step)
                    .cwiseMax(-1.0)
                    .cwiseMin(1.0);
            if (spec.freeze_initial) state.directions[i].col(0).setZero();
        }

        // Project the budgets onto the p-mean ball.
        std::vector<double> bpow(N * d);
        for (std::size_t j = 0; j < bpow.size(); ++j) bpow[j] = std::pow(state.budgets(j), p);
        const double bdist = std::pow(pairwise_sum(bpow) / static_cast<double>(N), 1.0 / p);
        if (bdist > 0.0) {
            const double factor = spec.projection == ProjectionMode::ShrinkOnly
                                      ? std::min(1.0, spec.radius / bdist)
                                      : std::max(1.0, spec.radius / bdist);
            state.budgets *= factor;
        }

        // Reconstruct the perturbed batch from the original samples.
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t n = 0; n < N; ++n) {
                const double disp = budget_at(n, i) / weights[i];
                for (std::size_t t = 0; t < times; ++t)
                    out.batch.at(n, track_idx[i], t) =
                        batch.at(n, track_idx[i], t) + disp * state.directions[i](n, t);
            }
        oracle.refresh_derived(out.batch);

        grads = oracle.eval(out.batch);
        out.trace.push_back(
            {k, grads.loss, empirical_distance(batch, out.batch, p, spec.tracks, weights)});
    }
    out.achieved_distance = empirical_distance(batch, out.batch, p, spec.tracks, weights);
    out.budget_state = std::move(state);
    return out;
}

PerturbedBatch pointwise_pgd(const LossOracle& oracle, const PathBatch& batch,
                             const AttackSpec& spec) {
    if (spec.radius < 0.0) throw std::invalid_argument("pointwise_pgd: radius must be >= 0");
    const auto weights = spec.weights();
    check_weights(spec.tracks, weights);
    const auto track_idx = resolve_tracks(batch, spec.tracks);
    const std::size_t N = batch.n_samples;
    const std::size_t times = batch.n_times();
    const double beta = spec.beta();

    PerturbedBatch out;
    out.batch = batch;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (int k = 0; k < spec.iterations; ++k) {
        const TrackGradients grads = oracle.eval(out.batch);
        out.trace.push_back(
            {k, grads.loss, empirical_distance(batch, out.batch, kInf, spec.tracks, weights)});
        if (spec.radius == 0.0) continue;
        const auto scaled = scaled_grads(grads, weights, spec.freeze_initial);
        for (std::size_t i = 0; i < spec.tracks.size(); ++i) {
            const double bound = spec.radius / weights[i]; // |dX| <= delta/lambda
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = spec.freeze_initial ? 1 : 0; t < times; ++t) {
                    const double base = batch.at(n, track_idx[i], t);
                    double x = out.batch.at(n, track_idx[i], t) +
                               beta / weights[i] * sign0(scaled[i](n, t));
                    x = std::min(std::max(x, base - bound), base + bound);
                    out.batch.at(n, track_idx[i], t) = x;
                }
        }
        oracle.refresh_derived(out.batch);
    }
    const TrackGradients final_grads = oracle.eval(out.batch);
    out.achieved_distance = empirical_distance(batch, out.batch, kInf, spec.tracks, weights);
    out.trace.push_back({spec.iterations, final_grads.loss, out.achieved_distance});
    return out;
}

PerturbedBatch run_attack(const LossOracle& oracle, const PathBatch& batch,
                          const AttackSpec& spec) {
    spec.validate();
    if (spec.radius == 0.0) {
        PerturbedBatch out;
        out.batch = batch;
        out.achieved_distance = 0.0;
        return out;
    }
    if (spec.pointwise()) return pointwise_pgd(oracle, batch, spec);
    switch (spec.method) {
    case AttackMethod::Wpgd: return wpgd(oracle, batch, spec);
    case AttackMethod::Wbpgd: return wbpgd(oracle, batch, spec);
    case AttackMethod::PointwisePgd: return pointwise_pgd(oracle, batch, spec);
    }
    throw std::logic_error("run_attack: unknown method");
}

PerturbedBatch run_attack(const HedgeNetwork& net, const PathBatch& batch,
                          const PayoffSpec& payoff, const CostSpec& cost,
                          const RiskMeasureSpec& measure, const AttackSpec& spec) {
    NetLossOracle oracle(net, payoff, cost, measure, spec.tracks);
    return run_attack(oracle, batch, spec);
}

} // namespace rhedge
