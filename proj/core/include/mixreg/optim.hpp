#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mixreg/mix.hpp"
#include "mixreg/net.hpp"
#include "mixreg/param.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

struct TrainConfig {
  double base_lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_fraction = 0.1;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState zeros(std::size_t n);
};

/// Warm-up length ceil(warmup_fraction * T), kept within [1, T - 1] when T > 1.
std::size_t warmup_steps(const TrainConfig& config, std::size_t total_steps);

/// Linear warm-up to base_lr over the first W steps, then linear decay to 0 at
/// step T. `t` may be fractional.
double lr_at(const TrainConfig& config, double t, std::size_t total_steps);

/// Bias-corrected Adam. Updates the moments and returns the parameter delta.
ParamVector adam_step(AdamState& state, const ParamVector& grad, double lr, double beta1, double beta2,
                      double eps);

/// Loss and gradient of a differentiable objective.
using Objective = std::function<LossGrad(const ParamVector&)>;

/// Loss at phi and the gradient of the regularized stochastic objective with
/// respect to w for one mask draw: phi_backward of the gradient at phi, plus
/// the decay-toward-anchor gradient when configured.
LossGrad mixed_gradient(const Objective& objective, const ParamVector& w, const MixPolicy& policy,
                        const MaskVector& mask);

struct StepMetrics {
  double loss = 0.0;                     // training loss at phi
  double distance_to_reference = -1.0;   // ||w' - w0||, -1 when no reference is registered
};

/// One optimization step: sample a mask keyed by `mask_key`, evaluate the
/// objective at phi, pull the gradient back, add decay and apply Adam. `w` and
/// `state` are updated in place.
StepMetrics train_step(const Objective& objective, ParamVector& w, const MixPolicy& policy,
                       AdamState& state, const TrainConfig& config, double lr, StreamKey mask_key,
                       const ParamVector* reference = nullptr);

StepMetrics train_step(const NetworkSpec& spec, ParamVector& w, const MixPolicy& policy,
                       const Batch& batch, AdamState& state, const TrainConfig& config, double lr,
                       StreamKey mask_key, const ParamVector* reference = nullptr);

}  // namespace mixreg
