#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mixreg/param.hpp"
#include "mixreg/random.hpp"

namespace mixreg {

/// Which parameters share one mask draw.
enum class Granularity {
  per_parameter,      // mixconnect / dropconnect
  per_source_neuron,  // mixout / dropout: one draw per source neuron column
};

enum class MaskScope { weights_only, weights_and_biases };

enum class AnchorKind { origin, pretrained_snapshot, init_snapshot, explicit_vector };

/// Law of a single mask unit, described by its mean and variance.
class MaskDistribution {
 public:
  /// Bernoulli keep mask with drop probability p in [0, 1).
  static MaskDistribution bernoulli(double drop_prob);

  /// Nonnegative mask with the given mean (> 0) and variance (>= 0). Sampled
  /// from a Gamma law with matching moments; exact oracles use only the moments.
  static MaskDistribution general(double mean, double variance);

  bool is_bernoulli() const { return bernoulli_; }
  double drop_prob() const { return drop_prob_; }
  double mean() const { return mean_; }
  double variance() const { return variance_; }

  /// sigma^2 / mu^2, which equals p / (1 - p) for Bernoulli masks.
  double noise_ratio() const { return variance_ / (mean_ * mean_); }

 private:
  MaskDistribution() = default;

  bool bernoulli_ = true;
  double drop_prob_ = 0.0;
  double mean_ = 1.0;
  double variance_ = 0.0;
};

struct DecayTerm {
  ParamVector target;
  double lambda = 0.0;
};

/// Full configuration of the stochastic mixing regularizer.
///
/// The anchor is held by value, so snapshots are frozen at construction and
/// never track later updates of the parameters they were copied from.
struct MixPolicy {
  Granularity granularity = Granularity::per_source_neuron;
  MaskDistribution distribution = MaskDistribution::bernoulli(0.0);
  AnchorKind anchor_kind = AnchorKind::origin;
  ParamVector anchor;
  std::set<std::size_t> excluded_layers;
  MaskScope scope = MaskScope::weights_only;
  std::optional<DecayTerm> decay;

  /// mixout(anchor, p): per-source-neuron Bernoulli mixing toward `anchor`.
  static MixPolicy mixout(ParamVector anchor, double p,
                          AnchorKind kind = AnchorKind::pretrained_snapshot);

  /// Inverted dropout(p): mixout toward the origin.
  static MixPolicy dropout(const std::shared_ptr<const ParamLayout>& layout, double p);

  /// Inverted dropconnect(p): per-parameter mixing toward the origin.
  static MixPolicy dropconnect(const std::shared_ptr<const ParamLayout>& layout, double p);

  /// No masking and no decay.
  static MixPolicy none(const std::shared_ptr<const ParamLayout>& layout);

  /// Throws ConfigError/DimensionError if the policy cannot be used with `layout`.
  void validate(const ParamLayout& layout) const;

  /// Short human-readable label, e.g. "mixout(pretrained,0.7)".
  std::string describe() const;
};

/// One sampled mask realization. Entries outside the policy's masking scope
/// (excluded layers, unmasked biases, normalization parameters) hold exactly
/// 1 and are flagged inactive: they behave as a deterministic mask of mean 1
/// and pass parameters through unchanged.
struct MaskVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;
  std::vector<unsigned char> active;

  /// All-ones mask with every entry active.
  static MaskVector ones(std::shared_ptr<const ParamLayout> layout);
  /// Mask from explicit values, every entry active.
  static MaskVector from_values(std::shared_ptr<const ParamLayout> layout, std::vector<double> values);

  std::size_t size() const { return values.size(); }
};

/// A set of parameter indices that share one mask draw.
struct MaskUnit {
  std::size_t layer = 0;
  std::vector<std::size_t> indices;
};

/// Independent mask units of `policy` on `layout`, in sampling order.
std::vector<MaskUnit> mask_units(const MixPolicy& policy, const ParamLayout& layout);

/// Mask with every in-scope entry at 1 and out-of-scope entries inactive.
MaskVector base_mask(const MixPolicy& policy, const std::shared_ptr<const ParamLayout>& layout);

/// Draw one mask. Each layer uses its own sub-stream of `key`, so the result is
/// a pure function of (policy, layout, key).
MaskVector sample_mask(const MixPolicy& policy, const std::shared_ptr<const ParamLayout>& layout,
                       StreamKey key);

/// Random mixture: phi_i = u_i + (M_i / mu) (w_i - u_i) on active entries,
/// w_i elsewhere.
ParamVector phi_mix(const ParamVector& w, const ParamVector& u, const MaskVector& mask, double mu);

/// Pull a gradient taken at phi back to w: (M_i / mu) g_i on active entries.
ParamVector phi_backward(const MaskVector& mask, double mu, const ParamVector& grad_at_phi);

/// (lambda / 2) * sum over weight entries of (w_i - u_i)^2.
double decay_penalty(const ParamVector& w, const ParamVector& u, double lambda);

/// lambda (w_i - u_i) on weight entries, 0 on bias and normalization entries.
ParamVector decay_grad(const ParamVector& w, const ParamVector& u, double lambda);

}  // namespace mixreg
