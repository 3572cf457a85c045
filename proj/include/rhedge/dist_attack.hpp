#pragma once

#include "rhedge/hedge_net.hpp"
#include "rhedge/path_batch.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rhedge {

enum class AttackMethod { Wpgd, Wbpgd, PointwisePgd };
enum class ProjectionMode { ShrinkOnly, BoundarySaturating };

struct AttackSpec {
    AttackMethod method = AttackMethod::Wbpgd;
    double radius = 0.0; ///< delta >= 0
    double wasserstein_p = 2.0; ///< order in (1,inf); infinity() selects pointwise mode
    int iterations = 20;
    double step = 0.0; ///< beta; 0 means the default 4*delta/iterations
    std::vector<std::string> tracks = {"S"};
    std::vector<double> track_weights; ///< lambda_i > 0; empty means all 1
    bool freeze_initial = true;
    ProjectionMode projection = ProjectionMode::ShrinkOnly;

    bool pointwise() const {
        return method == AttackMethod::PointwisePgd || std::isinf(wasserstein_p);
    }
    double q() const { return wasserstein_p / (wasserstein_p - 1.0); }
    double beta() const {
        return step > 0.0 ? step : 4.0 * radius / static_cast<double>(iterations);
    }
    std::vector<double> weights() const {
        return track_weights.empty() ? std::vector<double>(tracks.size(), 1.0) : track_weights;
    }
    void validate() const;
};

/// Loss value and input gradients for the attacked tracks at a given batch.
/// The production oracle wraps a fixed network in eval mode; tests plug in
/// closed-form losses.
struct TrackGradients {
    double loss = 0.0;
    std::vector<std::string> tracks;
    std::vector<Eigen::MatrixXd> grads; ///< per track, N x (T+1)
};

class LossOracle {
public:
    virtual ~LossOracle() = default;
    virtual TrackGradients eval(const PathBatch& batch) const = 0;
    /// Re-derives dependent tracks (the Heston variance swap) after the
    /// attacked tracks changed. Default: nothing to refresh.
    virtual void refresh_derived(PathBatch&) const {}
};

/// Deep-hedging loss of a fixed strategy at fixed omega, eval mode.
class NetLossOracle final : public LossOracle {
public:
    NetLossOracle(const HedgeNetwork& net, PayoffSpec payoff, CostSpec cost,
                  RiskMeasureSpec measure, std::vector<std::string> attacked_tracks);
    TrackGradients eval(const PathBatch& batch) const override;
    void refresh_derived(PathBatch& batch) const override;

private:
    const HedgeNetwork& net_;
    PayoffSpec payoff_;
    CostSpec cost_;
    RiskMeasureSpec measure_;
    std::vector<std::string> tracks_;
};

struct IterationRecord {
    int iteration; ///< 0 is the starting point, iterations+1 rows total
    double loss;
    double distance;
};

/// Budget/direction state of the reparameterized attack. Each attacked
/// trajectory carries its own budget (the flat vector is indexed
/// sample-major), directions are clamped to [-1,1].
struct BudgetDirectionState {
    Eigen::VectorXd budgets;                 ///< N*d, non-negative
    std::vector<Eigen::MatrixXd> directions; ///< per track, N x (T+1), in [-1,1]
};

struct PerturbedBatch {
    PathBatch batch;
    double achieved_distance = 0.0;
    std::vector<IterationRecord> trace;
    bool no_op = false; ///< all-zero gradients: attack could not move
    std::string warning;
    std::optional<BudgetDirectionState> budget_state; ///< final WBPGD state
};

double dual_l1_norm(std::span<const double> g);

/// Global coupling scale: ((1/N) sum_n sum_i ||g_i_n / lambda_i||_1^q)^(1/q).
double upsilon(const TrackGradients& grads, double q, std::span<const double> weights);

/// Closed-form first-order worst-case perturbation; saturates the empirical
/// distance at exactly delta whenever upsilon > 0.
PerturbedBatch theorem1_step(const PathBatch& batch, const TrackGradients& grads, double delta,
                             double q, std::span<const double> weights,
                             bool freeze_initial = true);

/// ((1/N) sum_n d(X_n, Xhat_n)^p)^(1/p) with the per-sample distance
/// (sum_i (lambda_i max_t |dX_i_t|)^p)^(1/p); p = inf takes maxima instead.
double empirical_distance(const PathBatch& original, const PathBatch& perturbed, double p,
                          std::span<const std::string> tracks, std::span<const double> weights);

/// Radial projection of the displacement onto the empirical ball. Shrink-only
/// is the true projection (factor min(1, delta/dist)); boundary-saturating is
/// the literal update that also inflates interior points onto the boundary.
PerturbedBatch project_ball(const PathBatch& original, const PathBatch& perturbed, double delta,
                            double p, std::span<const std::string> tracks,
                            std::span<const double> weights, ProjectionMode mode);

PerturbedBatch wpgd(const LossOracle& oracle, const PathBatch& batch, const AttackSpec& spec);
PerturbedBatch wbpgd(const LossOracle& oracle, const PathBatch& batch, const AttackSpec& spec);
PerturbedBatch pointwise_pgd(const LossOracle& oracle, const PathBatch& batch,
                             const AttackSpec& spec);

/// Dispatch on method and p; p = inf always routes to the pointwise attack.
PerturbedBatch run_attack(const LossOracle& oracle, const PathBatch& batch,
                          const AttackSpec& spec);

/// Convenience wrapper building the NetLossOracle from a fixed strategy.
PerturbedBatch run_attack(const HedgeNetwork& net, const PathBatch& batch,
                          const PayoffSpec& payoff, const CostSpec& cost,
                          const RiskMeasureSpec& measure, const AttackSpec& spec);

} // namespace rhedge
