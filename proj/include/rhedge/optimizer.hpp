#pragma once

#include "rhedge/hedge_net.hpp"

namespace rhedge {

struct LrSchedule {
    double initial = 0.005;
    double decay_factor = 0.5;
    int decay_interval = 0; ///< epochs between decays; 0 disables decay

    double rate_at(int epoch) const;
};

/// Adam with bias correction over every trainable tensor plus omega.
struct OptimizerState {
    NetworkGrads m, v;
    double m_omega = 0.0, v_omega = 0.0;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    LrSchedule schedule;

    static OptimizerState init(const HedgeNetwork& net, LrSchedule schedule);
};

void apply_update(HedgeNetwork& net, const NetworkGrads& grads, OptimizerState& state,
                  double learning_rate);

} // namespace rhedge
