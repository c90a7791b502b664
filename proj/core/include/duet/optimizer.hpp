#pragma once

#include <span>
#include <string>
#include <vector>

#include "duet/encoder.hpp"
#include "duet/loss.hpp"

namespace duet {

/// One named parameter tensor, flattened. decay marks whether weight
/// decay applies; adapt marks whether the LAMB trust ratio applies
/// (the scalar temperature is exempt from both, as biases and scalars
/// are in reference LAMB implementations).
struct TensorRef {
  std::string name;
  std::span<double> values;
  bool decay = true;
  bool adapt = true;
};

struct GradRef {
  std::span<const double> values;
};

/// Flat views over every trainable tensor, temperature included, in a
/// fixed order shared by optimizer state and gradients.
std::vector<TensorRef> tensor_refs(EncoderParams& params, Temperature& temperature);
std::vector<GradRef> grad_refs(const EncoderGrads& grads, const double& d_theta);

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  long long step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// LAMB update: bias-corrected Adam moments, update direction
/// r = m_hat / (sqrt(v_hat) + eps) + wd * param, per-tensor trust ratio
/// ||param|| / ||r|| (1 when either norm is zero), then
/// param <- param - lr * trust * r. Throws NumericError naming the tensor
/// on non-finite gradients.
void lamb_step(std::vector<TensorRef>& params, const std::vector<GradRef>& grads,
               OptimizerState& state, double lr, double weight_decay);

/// SGD with momentum, provided for optimizer comparisons only:
/// v <- momentum * v + g + wd * param; param <- param - lr * v.
void sgd_momentum_step(std::vector<TensorRef>& params, const std::vector<GradRef>& grads,
                       OptimizerState& state, double lr, double weight_decay,
                       double momentum);

}  // namespace duet
