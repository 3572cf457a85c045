#pragma once

#include "rhedge/market_sim.hpp"
#include "rhedge/objective.hpp"
#include "rhedge/path_batch.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rhedge {

enum class Architecture { NetSim, NetRec };
enum class RunMode { Train, Eval };

/// Parameters needed to regenerate the variance-swap instrument from the
/// (possibly perturbed) variance track inside the loss pipeline.
struct VswapLink {
    double mean_reversion = 1.0;
    double long_run_var = 0.04;
    double maturity_years = 30.0 / 365.0;
};

/// Which tracks feed the network and which are traded.
///   BS / GAD: features {"S"},     instruments {"S"}
///   Heston:   features {"S","v"}, instruments {"S","Vswap"}, vswap set
/// NetRec additionally appends the previous position to the feature vector.
struct InputLayout {
    std::vector<std::string> feature_tracks;
    std::vector<std::string> instrument_tracks;
    std::optional<VswapLink> vswap;
};

InputLayout layout_for(const MarketModelSpec& spec);

/// One timestep's tensors: two hidden layers with affine batch-norm before
/// the ReLU, then a linear output head. The same struct doubles as the
/// container for gradients and optimizer moments.
struct BlockParams {
    Eigen::MatrixXd w1, w2, w3; ///< rows = fan-out
    Eigen::VectorXd b1, b2, b3;
    Eigen::VectorXd gamma1, beta1, gamma2, beta2;

    static BlockParams zeros_like(const BlockParams& ref);
    template <typename Fn> void for_each_tensor(Fn&& fn) {
        fn(w1); fn(w2); fn(w3);
        fn(b1); fn(b2); fn(b3);
        fn(gamma1); fn(beta1); fn(gamma2); fn(beta2);
    }
};

struct BlockStats {
    Eigen::VectorXd mean1, var1, mean2, var2;
};

struct HedgeNetwork {
    Architecture arch = Architecture::NetSim;
    InputLayout layout;
    int horizon = 0;       ///< T timestep blocks
    int n_instruments = 1; ///< r
    int hidden = 20;
    double bn_eps = 1e-5;
    double bn_momentum = 0.9;
    std::vector<BlockParams> blocks;
    std::vector<BlockStats> stats;
    double omega = 0.0; ///< trainable OCE threshold

    int input_width() const {
        return static_cast<int>(layout.feature_tracks.size()) +
               (arch == Architecture::NetRec ? n_instruments : 0);
    }
};

HedgeNetwork init_network(Architecture arch, InputLayout layout, int horizon,
                          std::uint64_t seed, int n_instruments, int hidden = 20);

/// Train mode uses minibatch statistics (N >= 2) and folds them into the
/// running estimates; eval mode is a pure per-sample function of the frozen
/// statistics.
DeltaArray forward(HedgeNetwork& net, const PathBatch& batch, RunMode mode);
DeltaArray forward(const HedgeNetwork& net, const PathBatch& batch); ///< eval

struct NetworkGrads {
    std::vector<BlockParams> blocks;
    double omega = 0.0;

    static NetworkGrads zeros_like(const HedgeNetwork& net);
};

struct GradientBundle {
    double loss = 0.0;
    NetworkGrads params;
    std::vector<std::string> attacked_tracks;
    std::vector<Eigen::MatrixXd> input_grads; ///< per track, N x (T+1), column 0 zero
};

/// One reverse pass through positions, PnL (with the variance swap re-derived
/// from the v track when the layout says so), payoff and the OCE integrand at
/// the net's omega. Returns parameter gradients, d(loss)/d(omega) and input
/// gradients for the requested tracks with frozen time-0 components.
GradientBundle loss_and_grads(HedgeNetwork& net, const PathBatch& batch,
                              const PayoffSpec& payoff_spec, const CostSpec& cost,
                              const RiskMeasureSpec& measure, RunMode mode,
                              std::span<const std::string> attacked_tracks);
GradientBundle loss_and_grads(const HedgeNetwork& net, const PathBatch& batch,
                              const PayoffSpec& payoff_spec, const CostSpec& cost,
                              const RiskMeasureSpec& measure,
                              std::span<const std::string> attacked_tracks); ///< eval

/// The scalar value the gradients above differentiate (eval mode), exposed
/// for finite-difference checks.
double dh_loss_value(const HedgeNetwork& net, const PathBatch& batch,
                     const PayoffSpec& payoff_spec, const CostSpec& cost,
                     const RiskMeasureSpec& measure);

/// Recomputes the stored "Vswap" track from the current "v" track so a batch
/// whose variance was perturbed stays internally consistent.
void refresh_vswap_track(const VswapLink& link, PathBatch& batch);

} // namespace rhedge
