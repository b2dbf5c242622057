#include "mixreg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixreg/errors.hpp"

namespace mixreg {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

std::size_t warmup_steps(const TrainConfig& config, std::size_t total_steps) {
  if (total_steps == 0) throw ConfigError("total step count must be positive");
  const double raw = config.warmup_fraction * static_cast<double>(total_steps);
  // 0.1 * T is not always exact in binary; snap to the nearest integer first.
  const double nearest = std::round(raw);
  const double snapped = std::abs(raw - nearest) < 1e-9 * std::max(1.0, raw) ? nearest : std::ceil(raw);
  std::size_t w = static_cast<std::size_t>(snapped);
  w = std::max<std::size_t>(w, 1);
  if (total_steps > 1) w = std::min(w, total_steps - 1);
  return w;
}

double lr_at(const TrainConfig& config, double t, std::size_t total_steps) {
  const std::size_t warm = warmup_steps(config, total_steps);
  const double T = static_cast<double>(total_steps);
  const double W = static_cast<double>(warm);
  if (!(t >= 0.0 && t <= T)) throw ConfigError("step outside [0, T]");
  if (t >= T) return 0.0;
  if (t <= W) return config.base_lr * (t / W);
  return config.base_lr * ((T - t) / (T - W));
}

ParamVector adam_step(AdamState& state, const ParamVector& grad, double lr, double beta1, double beta2,
                      double eps) {
  const std::size_t n = grad.size();
  if (state.m.size() != n || state.v.size() != n) {
    throw DimensionError("Adam state does not match gradient length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient at index " + std::to_string(i));
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  ParamVector delta(grad.layout_ptr());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    delta[i] = -lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  return delta;
}

LossGrad mixed_gradient(const Objective& objective, const ParamVector& w, const MixPolicy& policy,
                        const MaskVector& mask) {
  const double mu = policy.distribution.mean();
  const ParamVector phi = phi_mix(w, policy.anchor, mask, mu);
  LossGrad at_phi = objective(phi);
  LossGrad out;
  out.loss = at_phi.loss;
  out.grad = phi_backward(mask, mu, at_phi.grad);
  if (policy.decay && policy.decay->lambda > 0.0) {
    const ParamVector dg = decay_grad(w, policy.decay->target, policy.decay->lambda);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += dg[i];
  }
  return out;
}

StepMetrics train_step(const Objective& objective, ParamVector& w, const MixPolicy& policy,
                       AdamState& state, const TrainConfig& config, double lr, StreamKey mask_key,
                       const ParamVector* reference) {
  const MaskVector mask = sample_mask(policy, w.layout_ptr(), mask_key);
  const LossGrad lg = mixed_gradient(objective, w, policy, mask);
  const ParamVector delta = adam_step(state, lg.grad, lr, config.beta1, config.beta2, config.adam_eps);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += delta[i];

  StepMetrics metrics;
  metrics.loss = lg.loss;
  if (reference) metrics.distance_to_reference = std::sqrt(deviation_norm_sq(w, *reference));
  return metrics;
}

StepMetrics train_step(const NetworkSpec& spec, ParamVector& w, const MixPolicy& policy,
                       const Batch& batch, AdamState& state, const TrainConfig& config, double lr,
                       StreamKey mask_key, const ParamVector* reference) {
  return train_step([&](const ParamVector& v) { return loss_and_grad(spec, v, batch); }, w, policy, state,
                    config, lr, mask_key, reference);
}

}  // namespace mixreg
