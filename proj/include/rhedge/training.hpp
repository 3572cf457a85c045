#pragma once

#include "rhedge/dist_attack.hpp"
#include "rhedge/hedge_net.hpp"
#include "rhedge/market_sim.hpp"
#include "rhedge/objective.hpp"
#include "rhedge/optimizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rhedge {

struct TrainConfig {
    MarketModelSpec model;
    Architecture arch = Architecture::NetSim;
    PayoffSpec payoff = EuropeanCall{100.0};
    CostSpec cost;
    RiskMeasureSpec measure = Cvar{0.5};
    int clean_epochs = 300;
    int adversarial_epochs = 0;
    std::size_t batch_size = 10000; ///< whole dataset when N is smaller
    LrSchedule lr;
    double clean_weight = 1.0; ///< alpha balancing clean vs adversarial terms
    AttackSpec attack;         ///< inner maximization (WBPGD by default)
    std::uint64_t seed = 0;
};

struct EpochRecord {
    int epoch;
    double clean_loss;
    double adv_loss;        ///< equals clean_loss during the clean phase
    double validation_risk; ///< NaN when no validation set was supplied
    double learning_rate;
};

struct TrainedStrategy {
    HedgeNetwork net;
    OptimizerState optimizer;
    std::vector<EpochRecord> history;
    std::string provenance_json; ///< seeds, data hash, epoch counts
};

/// floor(full/subset) disjoint contiguous subsets.
std::vector<PathBatch> partition_dataset(const PathBatch& full, std::size_t subset_size);

/// Minibatch Adam on the mean deep-hedging loss with trainable omega.
TrainedStrategy train_clean(const TrainConfig& config, const PathBatch& data,
                            const PathBatch* validation = nullptr);

/// Clean warm start, then per epoch and minibatch: attack the current
/// network, take an optimizer step on
///   alpha * mean l_DH(clean) + mean l_DH(adversarial).
TrainedStrategy train_adversarial(const TrainConfig& config, const PathBatch& data,
                                  const PathBatch* validation = nullptr);

struct SearchPoint {
    double alpha;
    double delta;
    double validation_risk;
    bool failed;
    std::string error;
};

struct SearchResult {
    double best_alpha = 0.0;
    double best_delta = 0.0;
    TrainedStrategy strategy;
    std::vector<SearchPoint> table;
};

/// Trains one strategy per (alpha, delta) grid point and returns the argmin
/// of the validation risk; ties resolve to smaller delta, then smaller alpha.
SearchResult hyperparam_search(const TrainConfig& config, std::span<const double> alpha_grid,
                               std::span<const double> delta_grid, const PathBatch& train_data,
                               const PathBatch& validation);

} // namespace rhedge
