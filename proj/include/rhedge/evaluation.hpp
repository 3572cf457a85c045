#pragma once

#include "rhedge/dist_attack.hpp"
#include "rhedge/hedge_net.hpp"
#include "rhedge/market_sim.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rhedge {

/// Eval-mode positions, PnL, then the OCE infimum with omega re-solved in
/// closed form / at the quantile (not the trained omega).
double evaluate_strategy(const HedgeNetwork& net, const PathBatch& data,
                         const PayoffSpec& payoff, const CostSpec& cost,
                         const RiskMeasureSpec& measure);

struct AttackCurvePoint {
    std::string method; ///< "wpgd" | "wbpgd" | "pgd"
    std::string tracks; ///< "s" | "sv"
    double delta;
    double risk;
    std::string config_hash;
};

struct PartitionRow {
    std::string strategy;
    std::size_t n; ///< training-subset size
    double mean, min, max;
    double variance; ///< NaN for a single partition
    std::string config_hash;
};

struct CovarianceRow {
    std::string method;
    std::string tracks;
    double delta;
    double distance;  ///< ||Cov(perturbed) - Cov(original)||_F
    double base_norm; ///< ||Cov(original)||_F
    std::string config_hash;
};

struct AcfRow {
    std::string method;
    std::string tracks;
    double delta;
    int lag;
    double mean_abs_diff;
    std::string config_hash;
};

struct EvalReport {
    std::vector<AttackCurvePoint> attack_curve;
    std::vector<PartitionRow> oos;
    std::vector<PartitionRow> ood;
    std::vector<CovarianceRow> covariance;
    std::vector<AcfRow> acf;

    void merge(const EvalReport& other);
    void validate() const; ///< finiteness and min <= mean <= max
    std::string to_json() const;
    /// One CSV per populated table, columns documented in the header line.
    void write_csv(const std::filesystem::path& dir) const;
};

/// Risk per (method, tracks, delta); the delta = 0 entry is the clean risk,
/// copied bit-for-bit from evaluate_strategy.
EvalReport attack_curve(const HedgeNetwork& net, const PathBatch& data,
                        const PayoffSpec& payoff, const CostSpec& cost,
                        const RiskMeasureSpec& measure, std::span<const double> delta_grid,
                        std::span<const AttackSpec> method_specs,
                        const std::string& config_hash = "");

/// Frobenius distance between the empirical path covariance matrices of a
/// track, plus the original covariance norm.
std::pair<double, double> covariance_frobenius(const PathBatch& original,
                                               const PathBatch& perturbed,
                                               const std::string& track = "S");

/// Cumulative-sum autocorrelation with population variance, so lag 0 is 1.
double cumulative_acf(std::span<const double> path, int lag);

/// Mean over paths of |ACF(perturbed) - ACF(original)| for lags 0..max_lag.
std::vector<double> acf_difference(const PathBatch& original, const PathBatch& perturbed,
                                   const std::string& track, int max_lag);

struct PartitionGroup {
    std::string strategy;
    std::size_t n;
    std::vector<const HedgeNetwork*> nets; ///< one per training partition
};

EvalReport oos_report(std::span<const PartitionGroup> groups, const PathBatch& test,
                      const PayoffSpec& payoff, const CostSpec& cost,
                      const RiskMeasureSpec& measure, const std::string& config_hash = "");

struct NamedStrategy {
    std::string label;
    const HedgeNetwork* net;
};

/// Simulates every perturbed spec, concatenates the pools and evaluates each
/// strategy on the union.
EvalReport ood_report(std::span<const NamedStrategy> strategies,
                      std::span<const MarketModelSpec> specs, std::size_t paths_per_spec,
                      std::uint64_t seed, const PayoffSpec& payoff, const CostSpec& cost,
                      const RiskMeasureSpec& measure, const std::string& config_hash = "");

} // namespace rhedge
