#include "cips/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cips {

void adam_step(Eigen::Ref<Eigen::MatrixXd> params, const Eigen::MatrixXd& grads,
               AdamState& state, const AdamConfig& config) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
    throw std::invalid_argument("adam_step: gradient shape does not match parameters");
  }
  if (state.steps == 0 || state.first.rows() != params.rows() ||
      state.first.cols() != params.cols()) {
    state.first = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.second = Eigen::MatrixXd::Zero(params.rows(), params.cols());
    state.steps = 0;
  }
  ++state.steps;
  state.first = config.beta1 * state.first + (1.0 - config.beta1) * grads;
  state.second = config.beta2 * state.second + (1.0 - config.beta2) * grads.cwiseProduct(grads);

  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
  params.array() -= config.learning_rate * (state.first.array() / correction1) /
                    ((state.second.array() / correction2).sqrt() + config.epsilon);
}

}  // namespace cips
