#include "rhedge/training.hpp"

#include "rhedge/batch_io.hpp"
#include "rhedge/evaluation.hpp"
#include "rhedge/numeric.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rhedge {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Range {
    std::size_t begin, count;
};

/// Contiguous minibatch ranges; a trailing single sample is folded into the
/// previous batch (batch norm needs at least two).
std::vector<Range> minibatch_ranges(std::size_t n, std::size_t batch_size) {
    if (batch_size < 2) throw std::invalid_argument("training: batch size must be >= 2");
    std::vector<Range> ranges;
    std::size_t begin = 0;
    while (begin < n) {
        std::size_t count = std::min(batch_size, n - begin);
        if (n - begin - count == 1) count += 1;
        ranges.push_back({begin, count});
        begin += count;
    }
    return ranges;
}

void accumulate(NetworkGrads& acc, const NetworkGrads& g, double scale) {
    for (std::size_t t = 0; t < acc.blocks.size(); ++t) {
        BlockParams& a = acc.blocks[t];
        const BlockParams& b = g.blocks[t];
        a.w1 += scale * b.w1;
        a.w2 += scale * b.w2;
        a.w3 += scale * b.w3;
        a.b1 += scale * b.b1;
        a.b2 += scale * b.b2;
        a.b3 += scale * b.b3;
        a.gamma1 += scale * b.gamma1;
        a.beta1 += scale * b.beta1;
        a.gamma2 += scale * b.gamma2;
        a.beta2 += scale * b.beta2;
    }
    acc.omega += scale * g.omega;
}

std::string make_provenance(const TrainConfig& config, const PathBatch& data,
                            const char* phase) {
    nlohmann::json j;
    j["phase"] = phase;
    j["seed"] = config.seed;
    j["data_hash"] = hash_hex(hash_batch(data));
    j["clean_epochs"] = config.clean_epochs;
    j["adversarial_epochs"] = config.adversarial_epochs;
    j["batch_size"] = config.batch_size;
    return j.dump();
}

HedgeNetwork fresh_network(const TrainConfig& config, const PathBatch& data) {
    const InputLayout layout = layout_for(config.model);
    const int r = static_cast<int>(layout.instrument_tracks.size());
    return init_network(config.arch, layout, static_cast<int>(data.horizon_steps), config.seed,
                        r);
}

double run_clean_phase(const TrainConfig& config, const PathBatch& data,
                       const PathBatch* validation, HedgeNetwork& net, OptimizerState& opt,
                       std::vector<EpochRecord>& history, int epochs, int epoch_offset) {
    const auto ranges = minibatch_ranges(data.n_samples, config.batch_size);
    double last_loss = kNan;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const double lr = opt.schedule.rate_at(epoch_offset + epoch);
        std::vector<double> losses;
        losses.reserve(ranges.size());
        for (const Range& range : ranges) {
            const PathBatch slice = slice_batch(data, range.begin, range.count);
            GradientBundle bundle = loss_and_grads(net, slice, config.payoff, config.cost,
                                                   config.measure, RunMode::Train, {});
            apply_update(net, bundle.params, opt, lr);
            losses.push_back(bundle.loss);
        }
        last_loss = pairwise_mean(losses);
        if (!std::isfinite(last_loss))
            throw std::runtime_error("train: loss diverged at epoch " +
                                     std::to_string(epoch_offset + epoch));
        const double val = validation ? evaluate_strategy(net, *validation, config.payoff,
                                                      config.cost, config.measure)
                                      : kNan;
        history.push_back({epoch_offset + epoch, last_loss, last_loss, val, lr});
    }
    return last_loss;
}

} // namespace

std::vector<PathBatch> partition_dataset(const PathBatch& full, std::size_t subset_size) {
    if (subset_size == 0) throw std::invalid_argument("partition_dataset: subset size is zero");
    if (subset_size > full.n_samples)
        throw std::invalid_argument("partition_dataset: subset larger than dataset");
    const std::size_t k = full.n_samples / subset_size;
    std::vector<PathBatch> parts;
    parts.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        parts.push_back(slice_batch(full, i * subset_size, subset_size));
    return parts;
}

TrainedStrategy train_clean(const TrainConfig& config, const PathBatch& data,
                            const PathBatch* validation) {
    TrainedStrategy out;
    out.net = fresh_network(config, data);
    LrSchedule schedule = config.lr;
    if (schedule.decay_interval == 0)
        schedule.decay_interval = std::max(1, config.clean_epochs / 4);
    out.optimizer = OptimizerState::init(out.net, schedule);
    run_clean_phase(config, data, validation, out.net, out.optimizer, out.history,
                    config.clean_epochs, 0);
    out.provenance_json = make_provenance(config, data, "clean");
    return out;
}

TrainedStrategy train_adversarial(const TrainConfig& config, const PathBatch& data,
                                  const PathBatch* validation) {
    TrainedStrategy out;
    out.net = fresh_network(config, data);
    const int total_epochs = config.clean_epochs + config.adversarial_epochs;
    LrSchedule schedule = config.lr;
    if (schedule.decay_interval == 0) schedule.decay_interval = std::max(1, total_epochs / 4);
    out.optimizer = OptimizerState::init(out.net, schedule);

    // Warm start: the adversarial phase never begins before these finish.
    run_clean_phase(config, data, validation, out.net, out.optimizer, out.history,
                    config.clean_epochs, 0);

    const auto ranges = minibatch_ranges(data.n_samples, config.batch_size);
    const double alpha = config.clean_weight;
    for (int epoch = 0; epoch < config.adversarial_epochs; ++epoch) {
        const int global_epoch = config.clean_epochs + epoch;
        const double lr = out.optimizer.schedule.rate_at(global_epoch);
        std::vector<double> clean_losses, adv_losses;
        for (const Range& range : ranges) {
            const PathBatch slice = slice_batch(data, range.begin, range.count);
            PerturbedBatch attacked;
            try {
                attacked = run_attack(out.net, slice, config.payoff, config.cost, config.measure,
                                      config.attack);
            } catch (const std::exception& e) {
                throw std::runtime_error("train_adversarial: attack failed at epoch " +
                                         std::to_string(global_epoch) + ": " + e.what());
            }
            GradientBundle adv = loss_and_grads(out.net, attacked.batch, config.payoff,
                                                config.cost, config.measure, RunMode::Train, {});
            NetworkGrads combined = std::move(adv.params);
            double clean_loss;
            if (alpha > 0.0) {
                GradientBundle clean = loss_and_grads(out.net, slice, config.payoff, config.cost,
                                                      config.measure, RunMode::Train, {});
                accumulate(combined, clean.params, alpha);
                clean_loss = clean.loss;
            } else {
                clean_loss = dh_loss_value(out.net, slice, config.payoff, config.cost,
                                           config.measure);
            }
            apply_update(out.net, combined, out.optimizer, lr);
            clean_losses.push_back(clean_loss);
            adv_losses.push_back(adv.loss);
        }
        const double clean_mean = pairwise_mean(clean_losses);
        const double adv_mean = pairwise_mean(adv_losses);
        if (!std::isfinite(adv_mean))
            throw std::runtime_error("train_adversarial: loss diverged at epoch " +
                                     std::to_string(global_epoch));
        const double val = validation ? evaluate_strategy(out.net, *validation, config.payoff,
                                                      config.cost, config.measure)
                                      : kNan;
        out.history.push_back({global_epoch, clean_mean, adv_mean, val, lr});
    }
    out.provenance_json = make_provenance(config, data, "adversarial");
    return out;
}

SearchResult hyperparam_search(const TrainConfig& config, std::span<const double> alpha_grid,
                               std::span<const double> delta_grid, const PathBatch& train_data,
                               const PathBatch& validation) {
    if (alpha_grid.empty() || delta_grid.empty())
        throw std::invalid_argument("hyperparam_search: empty grid");

    std::vector<std::pair<double, double>> grid; // (delta, alpha), tie order
    for (double d : delta_grid)
        for (double a : alpha_grid) grid.emplace_back(d, a);
    std::sort(grid.begin(), grid.end());

    SearchResult result;
    double best = std::numeric_limits<double>::infinity();
    bool have_best = false;
    for (const auto& [delta, alpha] : grid) {
        TrainConfig point = config;
        point.attack.radius = delta;
        point.clean_weight = alpha;
        SearchPoint row{alpha, delta, kNan, false, ""};
        try {
            TrainedStrategy s = train_adversarial(point, train_data, nullptr);
            row.validation_risk =
                evaluate_strategy(s.net, validation, config.payoff, config.cost, config.measure);
            if (!have_best || row.validation_risk < best) {
                best = row.validation_risk;
                have_best = true;
                result.best_alpha = alpha;
                result.best_delta = delta;
                result.strategy = std::move(s);
            }
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        result.table.push_back(row);
    }
    if (!have_best) throw std::runtime_error("hyperparam_search: every grid point failed");
    return result;
}

} // namespace rhedge
