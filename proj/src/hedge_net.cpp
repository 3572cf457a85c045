#include "rhedge/hedge_net.hpp"

#include "rhedge/numeric.hpp"
#include "rhedge/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rhedge {

namespace {

Eigen::VectorXd col_mean(const Eigen::MatrixXd& m) { return m.colwise().mean(); }

Eigen::VectorXd col_var_biased(const Eigen::MatrixXd& m, const Eigen::VectorXd& mu) {
    return (m.rowwise() - mu.transpose()).array().square().colwise().mean();
}

struct BlockCache {
    Eigen::MatrixXd x, z1, a1, z2, a2;
    Eigen::VectorXd mu1, var1, mu2, var2;
};

struct ForwardPass {
    std::vector<BlockCache> blocks;           // retained only when caching
    std::vector<Eigen::MatrixXd> deltas;      // T matrices, N x r
};

void check_finite(const Eigen::MatrixXd& m, int t, const char* where) {
    if (!m.allFinite()) {
        std::ostringstream os;
        os << "hedge_net: non-finite values at timestep " << t << " (" << where << ")";
        throw std::runtime_error(os.str());
    }
}

/// y = batchnorm(z) -> gamma * zhat + beta, ReLU applied by the caller.
Eigen::MatrixXd bn_apply(const Eigen::MatrixXd& z, const Eigen::VectorXd& mu,
                         const Eigen::VectorXd& var, const Eigen::VectorXd& gamma,
                         const Eigen::VectorXd& beta, double eps) {
    const Eigen::ArrayXd inv = (var.array() + eps).sqrt().inverse();
    Eigen::MatrixXd zhat =
        ((z.rowwise() - mu.transpose()).array().rowwise() * inv.transpose()).matrix();
    return ((zhat.array().rowwise() * gamma.transpose().array()).rowwise() +
            beta.transpose().array())
        .matrix();
}

/// Reverse of bn_apply. With batch statistics the normalization couples the
/// samples through mu and var; with frozen statistics it is a per-sample
/// affine map.
Eigen::MatrixXd bn_backward(const Eigen::MatrixXd& z, const Eigen::VectorXd& mu,
                            const Eigen::VectorXd& var, const Eigen::VectorXd& gamma,
                            double eps, bool batch_stats, const Eigen::MatrixXd& d_y,
                            Eigen::VectorXd& d_gamma, Eigen::VectorXd& d_beta) {
    const double n = static_cast<double>(z.rows());
    const Eigen::ArrayXd inv = (var.array() + eps).sqrt().inverse();
    const Eigen::MatrixXd centered = z.rowwise() - mu.transpose();
    const Eigen::MatrixXd zhat = (centered.array().rowwise() * inv.transpose()).matrix();

    d_gamma = (d_y.array() * zhat.array()).colwise().sum();
    d_beta = d_y.colwise().sum();
    const Eigen::MatrixXd d_zhat =
        (d_y.array().rowwise() * gamma.transpose().array()).matrix();

    if (!batch_stats)
        return (d_zhat.array().rowwise() * inv.transpose()).matrix();

    const Eigen::ArrayXd d_var = ((d_zhat.array() * centered.array()).colwise().sum()).transpose() *
                                 (-0.5) * inv.pow(3);
    const Eigen::ArrayXd d_mu =
        (d_zhat.colwise().sum().array().transpose() * -inv); // biased variance: no extra term
    Eigen::MatrixXd d_z = (d_zhat.array().rowwise() * inv.transpose()).matrix();
    d_z.array() += centered.array().rowwise() * (d_var.transpose() * 2.0 / n);
    d_z.array().rowwise() += d_mu.transpose() / n;
    return d_z;
}

std::vector<std::size_t> feature_track_indices(const HedgeNetwork& net, const PathBatch& batch) {
    std::vector<std::size_t> idx;
    for (const auto& label : net.layout.feature_tracks)
        idx.push_back(static_cast<std::size_t>(batch.require_track(label)));
    return idx;
}

Eigen::MatrixXd gather_features(const HedgeNetwork& net, const PathBatch& batch,
                                const std::vector<std::size_t>& feat_idx, std::size_t t,
                                const Eigen::MatrixXd* prev_delta) {
    const std::size_t N = batch.n_samples;
    const std::size_t f = feat_idx.size();
    Eigen::MatrixXd x(N, net.input_width());
    for (std::size_t k = 0; k < f; ++k)
        for (std::size_t n = 0; n < N; ++n) x(n, k) = batch.at(n, feat_idx[k], t);
    if (net.arch == Architecture::NetRec) {
        if (prev_delta)
            x.rightCols(net.n_instruments) = *prev_delta;
        else
            x.rightCols(net.n_instruments).setZero();
    }
    return x;
}

ForwardPass forward_pass(const HedgeNetwork& net, const PathBatch& batch, RunMode mode,
                         bool keep_cache, std::vector<BlockStats>* new_stats) {
    const std::size_t N = batch.n_samples;
    const std::size_t T = static_cast<std::size_t>(net.horizon);
    if (batch.horizon_steps != T)
        throw std::invalid_argument("hedge_net: batch horizon does not match network");
    if (mode == RunMode::Train && N < 2)
        throw std::invalid_argument("hedge_net: train mode needs at least 2 samples");

    const auto feat_idx = feature_track_indices(net, batch);
    ForwardPass pass;
    pass.deltas.resize(T);
    if (keep_cache) pass.blocks.resize(T);
    if (new_stats) new_stats->resize(T);

    const Eigen::MatrixXd* prev = nullptr;
    for (std::size_t t = 0; t < T; ++t) {
        const BlockParams& p = net.blocks[t];
        const BlockStats& s = net.stats[t];
        Eigen::MatrixXd x = gather_features(net, batch, feat_idx, t, prev);

        Eigen::MatrixXd z1 = (x * p.w1.transpose()).rowwise() + p.b1.transpose();
        Eigen::VectorXd mu1, var1;
        if (mode == RunMode::Train) {
            mu1 = col_mean(z1);
            var1 = col_var_biased(z1, mu1);
        } else {
            mu1 = s.mean1;
            var1 = s.var1;
        }
        Eigen::MatrixXd a1 =
            bn_apply(z1, mu1, var1, p.gamma1, p.beta1, net.bn_eps).cwiseMax(0.0);

        Eigen::MatrixXd z2 = (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
        Eigen::VectorXd mu2, var2;
        if (mode == RunMode::Train) {
            mu2 = col_mean(z2);
            var2 = col_var_biased(z2, mu2);
        } else {
            mu2 = s.mean2;
            var2 = s.var2;
        }
        Eigen::MatrixXd a2 =
            bn_apply(z2, mu2, var2, p.gamma2, p.beta2, net.bn_eps).cwiseMax(0.0);

        Eigen::MatrixXd d = (a2 * p.w3.transpose()).rowwise() + p.b3.transpose();
        check_finite(d, static_cast<int>(t), "position output");

        if (new_stats) {
            const double m = net.bn_momentum;
            auto& ns = (*new_stats)[t];
            ns.mean1 = m * s.mean1 + (1.0 - m) * mu1;
            ns.var1 = m * s.var1 + (1.0 - m) * var1;
            ns.mean2 = m * s.mean2 + (1.0 - m) * mu2;
            ns.var2 = m * s.var2 + (1.0 - m) * var2;
        }
        if (keep_cache) {
            auto& c = pass.blocks[t];
            c.x = std::move(x);
            c.z1 = std::move(z1);
            c.a1 = a1;
            c.z2 = std::move(z2);
            c.a2 = a2;
            c.mu1 = std::move(mu1);
            c.var1 = std::move(var1);
            c.mu2 = std::move(mu2);
            c.var2 = std::move(var2);
        }
        pass.deltas[t] = std::move(d);
        prev = &pass.deltas[t];
    }
    return pass;
}

DeltaArray to_delta_array(const std::vector<Eigen::MatrixXd>& deltas, std::size_t N,
                          std::size_t r) {
    DeltaArray out = DeltaArray::zeros(N, r, deltas.size());
    for (std::size_t t = 0; t < deltas.size(); ++t)
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t n = 0; n < N; ++n) out.at(n, j, t) = deltas[t](n, j);
    return out;
}

Eigen::MatrixXd vswap_matrix(const VswapLink& link, const Eigen::MatrixXd& v, double dt) {
    const std::size_t N = static_cast<std::size_t>(v.rows());
    const std::size_t m = static_cast<std::size_t>(v.cols());
    Eigen::MatrixXd vs(N, m);
    Eigen::VectorXd integral = Eigen::VectorXd::Zero(N);
    for (std::size_t j = 0; j < m; ++j) {
        if (j > 0) integral += 0.5 * dt * (v.col(j - 1) + v.col(j));
        const double tau = link.maturity_years - static_cast<double>(j) * dt;
        const double w = (1.0 - std::exp(-link.mean_reversion * tau)) / link.mean_reversion;
        vs.col(j) = integral.array() + (v.col(j).array() - link.long_run_var) * w +
                    link.long_run_var * tau;
    }
    return vs;
}

/// Instrument price matrices; "Vswap" is re-derived from the current "v"
/// track when the layout carries the link, so the loss remains a function of
/// the attacked tracks alone.
std::vector<Eigen::MatrixXd> instrument_prices(const HedgeNetwork& net, const PathBatch& batch) {
    std::vector<Eigen::MatrixXd> prices;
    for (const auto& label : net.layout.instrument_tracks) {
        if (label == "Vswap" && net.layout.vswap) {
            const std::size_t v_idx = static_cast<std::size_t>(batch.require_track("v"));
            prices.push_back(vswap_matrix(*net.layout.vswap, batch.track_matrix(v_idx), batch.dt));
        } else {
            prices.push_back(batch.track_matrix(
                static_cast<std::size_t>(batch.require_track(label))));
        }
    }
    return prices;
}

void vswap_adjoint_batched(const Eigen::MatrixXd& d_vs, const VswapLink& link, double dt,
                           Eigen::MatrixXd& d_v) {
    const std::size_t m = static_cast<std::size_t>(d_vs.cols());
    Eigen::VectorXd suffix = Eigen::VectorXd::Zero(d_vs.rows());
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t k = m - 1 - r;
        const double tau = link.maturity_years - static_cast<double>(k) * dt;
        const double w = (1.0 - std::exp(-link.mean_reversion * tau)) / link.mean_reversion;
        if (k >= 1)
            d_v.col(k) += dt * suffix + (0.5 * dt + w) * d_vs.col(k);
        else
            d_v.col(0) += 0.5 * dt * suffix + w * d_vs.col(0);
        suffix += d_vs.col(k);
    }
}

struct LossForward {
    ForwardPass pass;
    std::vector<Eigen::MatrixXd> prices; // per instrument, N x (T+1)
    Eigen::VectorXd claim;
    Eigen::VectorXd wealth; // pnl per sample (p0 = 0)
    std::vector<double> losses;
    double loss = 0.0;
};

LossForward loss_forward(const HedgeNetwork& net, const PathBatch& batch,
                         const PayoffSpec& payoff_spec, const CostSpec& cost,
                         const RiskMeasureSpec& measure, RunMode mode, bool keep_cache,
                         std::vector<BlockStats>* new_stats) {
    LossForward f;
    f.pass = forward_pass(net, batch, mode, keep_cache, new_stats);
    f.prices = instrument_prices(net, batch);
    f.claim = payoff(payoff_spec, batch);

    const std::size_t N = batch.n_samples;
    const std::size_t T = static_cast<std::size_t>(net.horizon);
    const std::size_t r = static_cast<std::size_t>(net.n_instruments);
    const double eps = cost.rate;

    Eigen::VectorXd wealth = -f.claim;
    for (std::size_t j = 0; j < r; ++j) {
        const Eigen::MatrixXd& p = f.prices[j];
        Eigen::VectorXd prev = Eigen::VectorXd::Zero(N);
        for (std::size_t t = 0; t < T; ++t) {
            const auto d = f.pass.deltas[t].col(j);
            wealth.array() += d.array() * (p.col(t + 1) - p.col(t)).array();
            if (eps > 0.0)
                wealth.array() -= eps * p.col(t).array() * (d - prev).array().abs();
            prev = d;
        }
    }
    f.wealth = std::move(wealth);

    f.losses.resize(N);
    for (std::size_t n = 0; n < N; ++n)
        f.losses[n] = oce_pointwise_loss(measure, f.wealth(n), net.omega);
    f.loss = pairwise_mean(f.losses);
    if (!std::isfinite(f.loss))
        throw std::runtime_error("hedge_net: non-finite loss value");
    return f;
}

} // namespace

InputLayout layout_for(const MarketModelSpec& spec) {
    InputLayout layout;
    switch (spec.kind()) {
    case ModelKind::BlackScholes:
    case ModelKind::Gad:
        layout.feature_tracks = {"S"};
        layout.instrument_tracks = {"S"};
        break;
    case ModelKind::Heston: {
        layout.feature_tracks = {"S", "v"};
        layout.instrument_tracks = {"S", "Vswap"};
        const auto& h = spec.heston();
        layout.vswap = VswapLink{h.mean_reversion, h.long_run_var, spec.maturity_years};
        break;
    }
    }
    return layout;
}

BlockParams BlockParams::zeros_like(const BlockParams& ref) {
    BlockParams z;
    z.w1 = Eigen::MatrixXd::Zero(ref.w1.rows(), ref.w1.cols());
    z.w2 = Eigen::MatrixXd::Zero(ref.w2.rows(), ref.w2.cols());
    z.w3 = Eigen::MatrixXd::Zero(ref.w3.rows(), ref.w3.cols());
    z.b1 = Eigen::VectorXd::Zero(ref.b1.size());
    z.b2 = Eigen::VectorXd::Zero(ref.b2.size());
    z.b3 = Eigen::VectorXd::Zero(ref.b3.size());
    z.gamma1 = Eigen::VectorXd::Zero(ref.gamma1.size());
    z.beta1 = Eigen::VectorXd::Zero(ref.beta1.size());
    z.gamma2 = Eigen::VectorXd::Zero(ref.gamma2.size());
    z.beta2 = Eigen::VectorXd::Zero(ref.beta2.size());
    return z;
}

NetworkGrads NetworkGrads::zeros_like(const HedgeNetwork& net) {
    NetworkGrads g;
    g.blocks.reserve(net.blocks.size());
    for (const auto& b : net.blocks) g.blocks.push_back(BlockParams::zeros_like(b));
    g.omega = 0.0;
    return g;
}

HedgeNetwork init_network(Architecture arch, InputLayout layout, int horizon,
                          std::uint64_t seed, int n_instruments, int hidden) {
    if (horizon < 1) throw std::invalid_argument("init_network: horizon must be >= 1");
    HedgeNetwork net;
    net.arch = arch;
    net.layout = std::move(layout);
    net.horizon = horizon;
    net.n_instruments = n_instruments;
    net.hidden = hidden;

    const int in = net.input_width();
    auto he_matrix = [&](int rows, int cols, std::uint64_t block, std::uint64_t slot) {
        const double scale = std::sqrt(2.0 / static_cast<double>(cols));
        Eigen::MatrixXd w(rows, cols);
        std::uint64_t k = 0;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) w(i, j) = scale * counter_normal(seed, block, slot, k++);
        return w;
    };

    net.blocks.resize(horizon);
    net.stats.resize(horizon);
    for (int t = 0; t < horizon; ++t) {
        BlockParams& p = net.blocks[t];
        p.w1 = he_matrix(hidden, in, t, 0);
        p.w2 = he_matrix(hidden, hidden, t, 1);
        p.w3 = he_matrix(n_instruments, hidden, t, 2);
        p.b1 = Eigen::VectorXd::Zero(hidden);
        p.b2 = Eigen::VectorXd::Zero(hidden);
        p.b3 = Eigen::VectorXd::Zero(n_instruments);
        p.gamma1 = Eigen::VectorXd::Ones(hidden);
        p.beta1 = Eigen::VectorXd::Zero(hidden);
        p.gamma2 = Eigen::VectorXd::Ones(hidden);
        p.beta2 = Eigen::VectorXd::Zero(hidden);
        BlockStats& s = net.stats[t];
        s.mean1 = Eigen::VectorXd::Zero(hidden);
        s.var1 = Eigen::VectorXd::Ones(hidden);
        s.mean2 = Eigen::VectorXd::Zero(hidden);
        s.var2 = Eigen::VectorXd::Ones(hidden);
    }
    net.omega = 0.0;
    return net;
}

DeltaArray forward(HedgeNetwork& net, const PathBatch& batch, RunMode mode) {
    if (mode == RunMode::Eval) return forward(static_cast<const HedgeNetwork&>(net), batch);
    std::vector<BlockStats> new_stats;
    ForwardPass pass = forward_pass(net, batch, RunMode::Train, false, &new_stats);
    net.stats = std::move(new_stats);
    return to_delta_array(pass.deltas, batch.n_samples,
                          static_cast<std::size_t>(net.n_instruments));
}

DeltaArray forward(const HedgeNetwork& net, const PathBatch& batch) {
    // Eval mode is per-sample, so large batches stream through in chunks.
    constexpr std::size_t kChunk = 65536;
    const std::size_t N = batch.n_samples;
    const std::size_t r = static_cast<std::size_t>(net.n_instruments);
    if (N <= kChunk) {
        ForwardPass pass = forward_pass(net, batch, RunMode::Eval, false, nullptr);
        return to_delta_array(pass.deltas, N, r);
    }
    DeltaArray out = DeltaArray::zeros(N, r, static_cast<std::size_t>(net.horizon));
    for (std::size_t begin = 0; begin < N; begin += kChunk) {
        const std::size_t count = std::min(kChunk, N - begin);
        const PathBatch piece = slice_batch(batch, begin, count);
        ForwardPass pass = forward_pass(net, piece, RunMode::Eval, false, nullptr);
        for (std::size_t t = 0; t < pass.deltas.size(); ++t)
            for (std::size_t j = 0; j < r; ++j)
                for (std::size_t n = 0; n < count; ++n)
                    out.at(begin + n, j, t) = pass.deltas[t](n, j);
    }
    return out;
}

double dh_loss_value(const HedgeNetwork& net, const PathBatch& batch,
                     const PayoffSpec& payoff_spec, const CostSpec& cost,
                     const RiskMeasureSpec& measure) {
    return loss_forward(net, batch, payoff_spec, cost, measure, RunMode::Eval, false, nullptr)
        .loss;
}

GradientBundle loss_and_grads(const HedgeNetwork& net, const PathBatch& batch,
                              const PayoffSpec& payoff_spec, const CostSpec& cost,
                              const RiskMeasureSpec& measure,
                              std::span<const std::string> attacked_tracks) {
    // Eval mode never mutates, so the non-const overload can delegate here.
    HedgeNetwork& mut = const_cast<HedgeNetwork&>(net);
    return loss_and_grads(mut, batch, payoff_spec, cost, measure, RunMode::Eval,
                          attacked_tracks);
}

GradientBundle loss_and_grads(HedgeNetwork& net, const PathBatch& batch,
                              const PayoffSpec& payoff_spec, const CostSpec& cost,
                              const RiskMeasureSpec& measure, RunMode mode,
                              std::span<const std::string> attacked_tracks) {
    const std::size_t N = batch.n_samples;
    const std::size_t T = static_cast<std::size_t>(net.horizon);
    const std::size_t r = static_cast<std::size_t>(net.n_instruments);
    const std::size_t times = T + 1;
    const double eps = cost.rate;

    for (const auto& label : attacked_tracks) {
        bool known = label == "S";
        for (const auto& f : net.layout.feature_tracks) known = known || f == label;
        if (!known)
            throw std::invalid_argument("loss_and_grads: track '" + label +
                                        "' does not enter the loss");
    }

    std::vector<BlockStats> new_stats;
    LossForward f = loss_forward(net, batch, payoff_spec, cost, measure, mode, true,
                                 mode == RunMode::Train ? &new_stats : nullptr);

    // d(loss)/d(pnl_n) and d(loss)/d(omega), both through the sample mean.
    Eigen::VectorXd d_pnl(N);
    std::vector<double> d_omega_terms(N);
    for (std::size_t n = 0; n < N; ++n) {
        const OceGrad g = oce_pointwise_grad(measure, f.wealth(n), net.omega);
        d_pnl(n) = g.d_pnl / static_cast<double>(N);
        d_omega_terms[n] = g.d_omega;
    }

    GradientBundle bundle;
    bundle.loss = f.loss;
    bundle.params = NetworkGrads::zeros_like(net);
    bundle.params.omega = pairwise_mean(d_omega_terms);

    // Gradients w.r.t. the raw tracks the loss reads.
    Eigen::MatrixXd d_s = Eigen::MatrixXd::Zero(N, times);
    const bool has_v = batch.has_track("v") &&
                       std::find(net.layout.feature_tracks.begin(),
                                 net.layout.feature_tracks.end(),
                                 "v") != net.layout.feature_tracks.end();
    Eigen::MatrixXd d_v;
    if (has_v) d_v = Eigen::MatrixXd::Zero(N, times);

    // Positions: increment terms, trading costs, and (for NetRec) the
    // recurrence feed, collected per timestep before walking blocks backward.
    std::vector<Eigen::MatrixXd> d_delta(T, Eigen::MatrixXd::Zero(N, r));
    for (std::size_t j = 0; j < r; ++j) {
        const Eigen::MatrixXd& p = f.prices[j];
        for (std::size_t t = 0; t < T; ++t) {
            Eigen::ArrayXd g = (p.col(t + 1) - p.col(t)).array();
            if (eps > 0.0) {
                Eigen::ArrayXd prev = Eigen::ArrayXd::Zero(N);
                if (t > 0) prev = f.pass.deltas[t - 1].col(j).array();
                Eigen::ArrayXd trade_sign =
                    (f.pass.deltas[t].col(j).array() - prev).unaryExpr([](double x) {
                        return sign0(x);
                    });
                g -= eps * p.col(t).array() * trade_sign;
                if (t + 1 < T) {
                    Eigen::ArrayXd next_sign = (f.pass.deltas[t + 1].col(j).array() -
                                                f.pass.deltas[t].col(j).array())
                                                   .unaryExpr([](double x) { return sign0(x); });
                    g += eps * p.col(t + 1).array() * next_sign;
                }
            }
            d_delta[t].col(j) = (d_pnl.array() * g).matrix();
        }
    }

    // Instrument price gradients.
    std::vector<Eigen::MatrixXd> d_price(r, Eigen::MatrixXd::Zero(N, times));
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t t = 0; t < times; ++t) {
            Eigen::ArrayXd g = Eigen::ArrayXd::Zero(N);
            if (t >= 1) g += f.pass.deltas[t - 1].col(j).array();
            if (t < T) {
                g -= f.pass.deltas[t].col(j).array();
                if (eps > 0.0) {
                    Eigen::ArrayXd prev = Eigen::ArrayXd::Zero(N);
                    if (t > 0) prev = f.pass.deltas[t - 1].col(j).array();
                    g -= eps * (f.pass.deltas[t].col(j).array() - prev).abs();
                }
            }
            d_price[j].col(t) = (d_pnl.array() * g).matrix();
        }
    }

    // Payoff pathway (claim enters with a minus sign).
    {
        const std::size_t s_idx = static_cast<std::size_t>(batch.require_track("S"));
        if (std::holds_alternative<EuropeanCall>(payoff_spec)) {
            const double strike = std::get<EuropeanCall>(payoff_spec).strike;
            for (std::size_t n = 0; n < N; ++n)
                if (batch.at(n, s_idx, T) > strike) d_s(n, T) -= d_pnl(n);
        } else {
            for (std::size_t n = 0; n < N; ++n) {
                double avg = 0.0;
                for (std::size_t t = 1; t <= T; ++t) avg += batch.at(n, s_idx, t);
                avg /= static_cast<double>(T);
                if (batch.at(n, s_idx, 0) - avg > 0.0) {
                    d_s(n, 0) -= d_pnl(n);
                    for (std::size_t t = 1; t <= T; ++t)
                        d_s(n, t) += d_pnl(n) / static_cast<double>(T);
                }
            }
        }
    }

    // Route instrument gradients to their source tracks.
    for (std::size_t j = 0; j < r; ++j) {
        const std::string& label = net.layout.instrument_tracks[j];
        if (label == "S") {
            d_s += d_price[j];
        } else if (label == "Vswap" && net.layout.vswap) {
            if (!has_v) throw std::logic_error("loss_and_grads: vswap link without v feature");
            vswap_adjoint_batched(d_price[j], *net.layout.vswap, batch.dt, d_v);
        } else {
            throw std::logic_error("loss_and_grads: unsupported instrument track " + label);
        }
    }

    // Blocks backward, newest first so the NetRec recurrence can push into
    // the previous timestep's position gradient.
    const std::size_t f_count = net.layout.feature_tracks.size();
    const bool train_stats = mode == RunMode::Train;
    for (std::size_t rt = 0; rt < T; ++rt) {
        const std::size_t t = T - 1 - rt;
        const BlockParams& p = net.blocks[t];
        const BlockCache& c = f.pass.blocks[t];
        BlockParams& g = bundle.params.blocks[t];

        const Eigen::MatrixXd& d_out = d_delta[t];
        g.w3 = d_out.transpose() * c.a2;
        g.b3 = d_out.colwise().sum();

        Eigen::MatrixXd d_a2 = d_out * p.w3;
        d_a2.array() *= (c.a2.array() > 0.0).cast<double>();
        Eigen::MatrixXd d_z2 = bn_backward(c.z2, c.mu2, c.var2, p.gamma2, net.bn_eps,
                                           train_stats, d_a2, g.gamma2, g.beta2);

        g.w2 = d_z2.transpose() * c.a1;
        g.b2 = d_z2.colwise().sum();

        Eigen::MatrixXd d_a1 = d_z2 * p.w2;
        d_a1.array() *= (c.a1.array() > 0.0).cast<double>();
        Eigen::MatrixXd d_z1 = bn_backward(c.z1, c.mu1, c.var1, p.gamma1, net.bn_eps,
                                           train_stats, d_a1, g.gamma1, g.beta1);

        g.w1 = d_z1.transpose() * c.x;
        g.b1 = d_z1.colwise().sum();

        const Eigen::MatrixXd d_x = d_z1 * p.w1;
        for (std::size_t k = 0; k < f_count; ++k) {
            const std::string& label = net.layout.feature_tracks[k];
            if (label == "S")
                d_s.col(t) += d_x.col(k);
            else if (label == "v")
                d_v.col(t) += d_x.col(k);
        }
        if (net.arch == Architecture::NetRec && t > 0)
            d_delta[t - 1] += d_x.rightCols(r);
    }

    // Initial values are shared across samples and are never perturbed.
    d_s.col(0).setZero();
    if (has_v) d_v.col(0).setZero();

    bundle.attacked_tracks.assign(attacked_tracks.begin(), attacked_tracks.end());
    for (const auto& label : attacked_tracks) {
        if (label == "S")
            bundle.input_grads.push_back(d_s);
        else if (label == "v")
            bundle.input_grads.push_back(d_v);
        else
            throw std::invalid_argument("loss_and_grads: no gradient for track " + label);
    }
    for (const auto& m : bundle.input_grads)
        if (!m.allFinite()) throw std::runtime_error("loss_and_grads: non-finite input gradient");

    if (mode == RunMode::Train) net.stats = std::move(new_stats);
    return bundle;
}

void refresh_vswap_track(const VswapLink& link, PathBatch& batch) {
    const std::size_t v_idx = static_cast<std::size_t>(batch.require_track("v"));
    const std::size_t vs_idx = static_cast<std::size_t>(batch.require_track("Vswap"));
    batch.set_track_matrix(vs_idx, vswap_matrix(link, batch.track_matrix(v_idx), batch.dt));
}

} // namespace rhedge
