#include "duet/optimizer.hpp"

#include <cmath>

#include "duet/errors.hpp"

namespace duet {

std::vector<TensorRef> tensor_refs(EncoderParams& params, Temperature& temperature) {
  return {
      {"img_w1", params.img_w1.values(), true, true},
      {"img_b1", params.img_b1, true, true},
      {"img_w2", params.img_w2.values(), true, true},
      {"img_b2", params.img_b2, true, true},
      {"tok_embed", params.tok_embed.values(), true, true},
      {"txt_proj", params.txt_proj.values(), true, true},
      {"txt_b", params.txt_b, true, true},
      // Temperature is exempt from weight decay (decaying theta pulls
      // sigma toward 1, not 0) and from trust-ratio adaptation (a scalar
      // starting at 0 would otherwise move proportionally to |theta| and
      // stay frozen).
      {"temperature_theta", {&temperature.theta, 1}, false, false},
  };
}

std::vector<GradRef> grad_refs(const EncoderGrads& grads, const double& d_theta) {
  return {
      {grads.img_w1.values()}, {grads.img_b1},        {grads.img_w2.values()},
      {grads.img_b2},          {grads.tok_embed.values()}, {grads.txt_proj.values()},
      {grads.txt_b},           {{&d_theta, 1}},
  };
}

namespace {

void check_shapes(const std::vector<TensorRef>& params, const std::vector<GradRef>& grads) {
  if (params.size() != grads.size())
    throw DataError("optimizer: tensor/gradient count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].values.size() != grads[t].values.size())
      throw DataError("optimizer: shape mismatch for tensor " + params[t].name);
    if (!all_finite(grads[t].values))
      throw NumericError("non-finite gradient for tensor " + params[t].name);
  }
}

void ensure_state(OptimizerState& state, const std::vector<TensorRef>& params) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t t = 0; t < params.size(); ++t) {
      state.first_moment[t].assign(params[t].values.size(), 0.0);
      state.second_moment[t].assign(params[t].values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw DataError("optimizer: state does not match parameter set");
}

}  // namespace

void lamb_step(std::vector<TensorRef>& params, const std::vector<GradRef>& grads,
               OptimizerState& state, double lr, double weight_decay) {
  check_shapes(params, grads);
  ensure_state(state, params);
  ++state.step;
  double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  std::vector<double> direction;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t].values;
    auto g = grads[t].values;
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    double wd = params[t].decay ? weight_decay : 0.0;

    direction.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      double m_hat = m[i] / bias1;
      double v_hat = v[i] / bias2;
      direction[i] = m_hat / (std::sqrt(v_hat) + state.epsilon) + wd * p[i];
    }

    double trust = 1.0;
    if (params[t].adapt) {
      double p_norm = l2_norm(p);
      double r_norm = l2_norm(direction);
      trust = (p_norm == 0.0 || r_norm == 0.0) ? 1.0 : p_norm / r_norm;
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * trust * direction[i];
  }
}

void sgd_momentum_step(std::vector<TensorRef>& params, const std::vector<GradRef>& grads,
                       OptimizerState& state, double lr, double weight_decay,
                       double momentum) {
  check_shapes(params, grads);
  ensure_state(state, params);
  ++state.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t].values;
    auto g = grads[t].values;
    auto& vel = state.first_moment[t];
    double wd = params[t].decay ? weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      vel[i] = momentum * vel[i] + g[i] + wd * p[i];
      p[i] -= lr * vel[i];
    }
  }
}

}  // namespace duet
