#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace cips {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter block.
struct AdamState {
  Eigen::MatrixXd first;
  Eigen::MatrixXd second;
  std::int64_t steps = 0;
};

/// One bias-corrected Adam update of `params` in place. The state is lazily
/// sized to the block on first use.
void adam_step(Eigen::Ref<Eigen::MatrixXd> params, const Eigen::MatrixXd& grads,
               AdamState& state, const AdamConfig& config);

}  // namespace cips
