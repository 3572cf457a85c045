#pragma once

#include "rhedge/dist_attack.hpp"
#include "rhedge/market_sim.hpp"
#include "rhedge/objective.hpp"
#include "rhedge/training.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rhedge {

struct OodPlan {
    std::size_t n_specs = 0; ///< 0 disables the out-of-distribution stage
    std::size_t paths_per_spec = 2000;
    double lo = 0.9;
    double hi = 1.1;
};

struct EvalPlan {
    std::vector<double> delta_grid = {0.0, 0.01, 0.03, 0.05, 0.1, 0.3, 0.5};
    std::vector<std::string> methods = {"wbpgd", "wpgd"};
    std::vector<std::string> attack_tracks; ///< "s" and/or "sv"; default by model
    std::vector<std::size_t> oos_partition_sizes;
    int acf_max_lag = 10;
    OodPlan ood;
};

struct SearchPlan {
    std::vector<double> alpha_grid;
    std::vector<double> delta_grid;
};

/// Fully resolved experiment description. Loading applies the documented
/// defaults and rejects unknown keys and cross-field inconsistencies before
/// any computation starts.
struct ExperimentConfig {
    int version = 1;
    MarketModelSpec model;
    bool gad_interval_mode = false;
    PayoffSpec payoff = EuropeanCall{100.0};
    CostSpec cost;
    RiskMeasureSpec measure = Cvar{0.5};
    Architecture arch = Architecture::NetSim;

    std::size_t n_train = 100000;
    std::size_t n_validation = 100000;
    std::size_t n_test = 1000000;
    int clean_epochs = 0; ///< resolved per model when absent
    int adversarial_epochs = 0;
    std::size_t batch_size = 10000;
    double learning_rate = 0.0; ///< resolved per model when absent
    double lr_decay_factor = 0.5;
    int lr_decay_interval = 0; ///< 0: a quarter of the total epochs
    double clean_weight = 1.0;
    std::string existing_checkpoint; ///< skip training, evaluate this net

    AttackSpec attack;
    EvalPlan evaluation;
    SearchPlan search;

    std::uint64_t master_seed = 1;
    std::string output_dir = "runs/out";
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical resolved JSON; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

TrainConfig make_train_config(const ExperimentConfig& config);

/// Attack spec for a named method/track-set pair of the evaluation plan.
AttackSpec make_attack_spec(const ExperimentConfig& config, const std::string& method,
                            const std::string& tracks);

/// Deterministic sub-seed derivation, recorded in manifests as "role:index".
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t role, std::uint64_t index = 0);

} // namespace rhedge
