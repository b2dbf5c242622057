#include "mixreg/mix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "mixreg/errors.hpp"

namespace mixreg {

MaskDistribution MaskDistribution::bernoulli(double drop_prob) {
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw ConfigError("drop probability must lie in [0, 1), got " + std::to_string(drop_prob));
  }
  MaskDistribution d;
  d.bernoulli_ = true;
  d.drop_prob_ = drop_prob;
  d.mean_ = 1.0 - drop_prob;
  d.variance_ = drop_prob * (1.0 - drop_prob);
  return d;
}

MaskDistribution MaskDistribution::general(double mean, double variance) {
  if (!(mean > 0.0) || !std::isfinite(mean)) {
    throw ConfigError("mask mean must be positive, got " + std::to_string(mean));
  }
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw ConfigError("mask variance must be nonnegative, got " + std::to_string(variance));
  }
  MaskDistribution d;
  d.bernoulli_ = false;
  d.mean_ = mean;
  d.variance_ = variance;
  return d;
}

MixPolicy MixPolicy::mixout(ParamVector anchor, double p, AnchorKind kind) {
  MixPolicy policy;
  policy.granularity = Granularity::per_source_neuron;
  policy.distribution = MaskDistribution::bernoulli(p);
  policy.anchor_kind = kind;
  policy.anchor = std::move(anchor);
  return policy;
}

MixPolicy MixPolicy::dropout(const std::shared_ptr<const ParamLayout>& layout, double p) {
  return mixout(ParamVector(layout), p, AnchorKind::origin);
}

MixPolicy MixPolicy::dropconnect(const std::shared_ptr<const ParamLayout>& layout, double p) {
  MixPolicy policy = dropout(layout, p);
  policy.granularity = Granularity::per_parameter;
  return policy;
}

MixPolicy MixPolicy::none(const std::shared_ptr<const ParamLayout>& layout) {
  return dropout(layout, 0.0);
}

void MixPolicy::validate(const ParamLayout& layout) const {
  if (anchor.size() != layout.total_len() || !(anchor.layout() == layout)) {
    throw DimensionError("anchor layout does not match the model layout");
  }
  for (std::size_t id : excluded_layers) {
    if (id >= layout.num_layers()) {
      throw ConfigError("excluded layer " + std::to_string(id) + " does not exist");
    }
  }
  if (decay) {
    if (!(decay->lambda >= 0.0)) throw ConfigError("decay coefficient must be >= 0");
    if (decay->target.size() != layout.total_len() || !(decay->target.layout() == layout)) {
      throw DimensionError("decay target layout does not match the model layout");
    }
  }
}

std::string MixPolicy::describe() const {
  const char* anchor_name = "origin";
  switch (anchor_kind) {
    case AnchorKind::origin: anchor_name = "origin"; break;
    case AnchorKind::pretrained_snapshot: anchor_name = "pretrained"; break;
    case AnchorKind::init_snapshot: anchor_name = "init"; break;
    case AnchorKind::explicit_vector: anchor_name = "explicit"; break;
  }
  std::ostringstream os;
  os << (granularity == Granularity::per_source_neuron ? "mixout" : "mixconnect") << '(' << anchor_name
     << ',';
  if (distribution.is_bernoulli()) {
    os << distribution.drop_prob();
  } else {
    os << "mu=" << distribution.mean() << ",var=" << distribution.variance();
  }
  os << ')';
  if (decay) os << "+wdecay(" << decay->lambda << ')';
  return os.str();
}

MaskVector MaskVector::ones(std::shared_ptr<const ParamLayout> layout) {
  MaskVector m;
  const std::size_t n = layout->total_len();
  m.layout = std::move(layout);
  m.values.assign(n, 1.0);
  m.active.assign(n, 1);
  return m;
}

MaskVector MaskVector::from_values(std::shared_ptr<const ParamLayout> layout, std::vector<double> values) {
  if (values.size() != layout->total_len()) throw DimensionError("mask length does not match layout");
  MaskVector m = ones(std::move(layout));
  m.values = std::move(values);
  return m;
}

namespace {

// Visits every independent unit in sampling order: layers ascending, then
// weight units (columns, or single entries), then bias units.
template <typename Fn>
void for_each_unit(const MixPolicy& policy, const ParamLayout& layout, Fn&& fn) {
  const bool with_bias = policy.scope == MaskScope::weights_and_biases;
  std::array<std::size_t, 1> single{};
  for (const LayerDesc& d : layout.layers()) {
    if (policy.excluded_layers.count(d.id)) continue;
    if (policy.granularity == Granularity::per_source_neuron) {
      for (const auto& seg : layout.neuron_segments(d.id)) fn(d.id, std::span<const std::size_t>(seg));
      if (with_bias && d.bias_len > 0) {
        std::vector<std::size_t> bias(d.bias_len);
        for (std::size_t k = 0; k < d.bias_len; ++k) bias[k] = d.bias_offset + k;
        fn(d.id, std::span<const std::size_t>(bias));
      }
    } else {
      for (std::size_t i = d.weight_offset; i < d.bias_offset; ++i) {
        single[0] = i;
        fn(d.id, std::span<const std::size_t>(single));
      }
      if (with_bias) {
        for (std::size_t i = d.bias_offset; i < d.bias_offset + d.bias_len; ++i) {
          single[0] = i;
          fn(d.id, std::span<const std::size_t>(single));
        }
      }
    }
  }
}

MaskVector inactive_mask(const std::shared_ptr<const ParamLayout>& layout) {
  MaskVector m = MaskVector::ones(layout);
  std::fill(m.active.begin(), m.active.end(), 0);
  return m;
}

}  // namespace

std::vector<MaskUnit> mask_units(const MixPolicy& policy, const ParamLayout& layout) {
  std::vector<MaskUnit> units;
  for_each_unit(policy, layout, [&](std::size_t layer, std::span<const std::size_t> idx) {
    units.push_back(MaskUnit{layer, std::vector<std::size_t>(idx.begin(), idx.end())});
  });
  return units;
}

MaskVector base_mask(const MixPolicy& policy, const std::shared_ptr<const ParamLayout>& layout) {
  MaskVector m = inactive_mask(layout);
  for_each_unit(policy, *layout, [&](std::size_t, std::span<const std::size_t> idx) {
    for (std::size_t i : idx) m.active[i] = 1;
  });
  return m;
}

MaskVector sample_mask(const MixPolicy& policy, const std::shared_ptr<const ParamLayout>& layout,
                       StreamKey key) {
  const MaskDistribution& dist = policy.distribution;
  MaskVector m = inactive_mask(layout);

  std::size_t current_layer = static_cast<std::size_t>(-1);
  std::mt19937_64 engine;
  std::optional<std::gamma_distribution<double>> gamma;
  if (!dist.is_bernoulli() && dist.variance() > 0.0) {
    const double mu = dist.mean();
    const double var = dist.variance();
    gamma.emplace(mu * mu / var, var / mu);
  }

  for_each_unit(policy, *layout, [&](std::size_t layer, std::span<const std::size_t> idx) {
    if (layer != current_layer) {
      engine = make_engine(key, layer);
      current_layer = layer;
      if (gamma) gamma->reset();
    }
    double value;
    if (dist.is_bernoulli()) {
      value = uniform01(engine) < dist.mean() ? 1.0 : 0.0;
    } else if (gamma) {
      value = (*gamma)(engine);
    } else {
      value = dist.mean();
    }
    for (std::size_t i : idx) {
      m.values[i] = value;
      m.active[i] = 1;
    }
  });
  return m;
}

ParamVector phi_mix(const ParamVector& w, const ParamVector& u, const MaskVector& mask, double mu) {
  if (!(mu > 0.0)) throw ConfigError("mask mean must be positive");
  require_same_layout(w, u, "phi_mix");
  if (mask.size() != w.size()) throw DimensionError("phi_mix: mask length does not match parameters");
  ParamVector out(w.layout_ptr());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!mask.active[i]) {
      out[i] = w[i];
      continue;
    }
    const double ratio = mask.values[i] / mu;
    // ratio == 1 is the identity; skip the u round trip so it stays exact.
    out[i] = ratio == 1.0 ? w[i] : u[i] + ratio * (w[i] - u[i]);
  }
  return out;
}

ParamVector phi_backward(const MaskVector& mask, double mu, const ParamVector& grad_at_phi) {
  if (!(mu > 0.0)) throw ConfigError("mask mean must be positive");
  if (mask.size() != grad_at_phi.size()) {
    throw DimensionError("phi_backward: mask length does not match gradient");
  }
  ParamVector out(grad_at_phi.layout_ptr());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = mask.active[i] ? (mask.values[i] / mu) * grad_at_phi[i] : grad_at_phi[i];
  }
  return out;
}

double decay_penalty(const ParamVector& w, const ParamVector& u, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("decay coefficient must be >= 0");
  require_same_layout(w, u, "decay_penalty");
  double acc = 0.0;
  for (const LayerDesc& d : w.layout().layers()) {
    for (std::size_t i = d.weight_offset; i < d.bias_offset; ++i) {
      const double diff = w[i] - u[i];
      acc += diff * diff;
    }
  }
  return 0.5 * lambda * acc;
}

ParamVector decay_grad(const ParamVector& w, const ParamVector& u, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("decay coefficient must be >= 0");
  require_same_layout(w, u, "decay_grad");
  ParamVector out(w.layout_ptr());
  for (const LayerDesc& d : w.layout().layers()) {
    for (std::size_t i = d.weight_offset; i < d.bias_offset; ++i) out[i] = lambda * (w[i] - u[i]);
  }
  return out;
}

}  // namespace mixreg
