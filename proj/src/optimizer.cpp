#include "rhedge/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rhedge {

double LrSchedule::rate_at(int epoch) const {
    if (decay_interval <= 0) return initial;
    const int k = epoch / decay_interval;
    return initial * std::pow(decay_factor, k);
}

OptimizerState OptimizerState::init(const HedgeNetwork& net, LrSchedule schedule_) {
    OptimizerState s;
    s.m = NetworkGrads::zeros_like(net);
    s.v = NetworkGrads::zeros_like(net);
    s.schedule = schedule_;
    return s;
}

namespace {

void adam_tensor(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                 Eigen::MatrixXd& m, Eigen::MatrixXd& v, double lr, double b1, double b2,
                 double eps, double bc1, double bc2) {
    m = b1 * m + (1.0 - b1) * grad;
    v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void adam_vector(Eigen::Ref<Eigen::VectorXd> param, const Eigen::VectorXd& grad,
                 Eigen::VectorXd& m, Eigen::VectorXd& v, double lr, double b1, double b2,
                 double eps, double bc1, double bc2) {
    m = b1 * m + (1.0 - b1) * grad;
    v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

} // namespace

void apply_update(HedgeNetwork& net, const NetworkGrads& grads, OptimizerState& state,
                  double learning_rate) {
    if (grads.blocks.size() != net.blocks.size())
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    for (std::size_t t = 0; t < net.blocks.size(); ++t) {
        BlockParams& p = net.blocks[t];
        const BlockParams& g = grads.blocks[t];
        BlockParams& m = state.m.blocks[t];
        BlockParams& v = state.v.blocks[t];
        adam_tensor(p.w1, g.w1, m.w1, v.w1, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_tensor(p.w2, g.w2, m.w2, v.w2, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_tensor(p.w3, g.w3, m.w3, v.w3, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.b1, g.b1, m.b1, v.b1, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.b2, g.b2, m.b2, v.b2, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.b3, g.b3, m.b3, v.b3, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.gamma1, g.gamma1, m.gamma1, v.gamma1, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.beta1, g.beta1, m.beta1, v.beta1, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.gamma2, g.gamma2, m.gamma2, v.gamma2, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
        adam_vector(p.beta2, g.beta2, m.beta2, v.beta2, learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2);
    }

    state.m_omega = state.beta1 * state.m_omega + (1.0 - state.beta1) * grads.omega;
    state.v_omega = state.beta2 * state.v_omega + (1.0 - state.beta2) * grads.omega * grads.omega;
    net.omega -= learning_rate * (state.m_omega / bc1) / (std::sqrt(state.v_omega / bc2) + state.eps);
}

} // namespace rhedge
