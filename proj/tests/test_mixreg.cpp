#include <doctest.h>

#include <cmath>

#include "mixreg/errors.hpp"
#include "mixreg/mix.hpp"

using namespace mixreg;

namespace {

std::shared_ptr<const ParamLayout> small_net() {
  return ParamLayout::create({LayerShape{3, 4, true, 6}, LayerShape{2, 3, true, 0}});
}

ParamVector ramp(const std::shared_ptr<const ParamLayout>& layout, double offset) {
  std::vector<double> v(layout->total_len());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = offset + 0.25 * static_cast<double>(i);
  return ParamVector(layout, v);
}

}  // namespace

TEST_CASE("bernoulli laws need p in [0, 1)") {
  CHECK_THROWS_AS(MaskDistribution::bernoulli(1.0), ConfigError);
  CHECK_THROWS_AS(MaskDistribution::bernoulli(-0.1), ConfigError);
  const auto d = MaskDistribution::bernoulli(0.3);
  CHECK(d.mean() == doctest::Approx(0.7));
  CHECK(d.variance() == doctest::Approx(0.21));
  CHECK(d.noise_ratio() == doctest::Approx(0.3 / 0.7));
  CHECK_THROWS_AS(MaskDistribution::general(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(MaskDistribution::general(1.0, -1.0), ConfigError);
}

TEST_CASE("mask units per granularity and scope") {
  auto layout = small_net();
  MixPolicy policy = MixPolicy::dropout(layout, 0.5);
  CHECK(mask_units(policy, *layout).size() == 4 + 3);

  policy.scope = MaskScope::weights_and_biases;
  const auto with_bias = mask_units(policy, *layout);
  CHECK(with_bias.size() == 4 + 1 + 3 + 1);
  CHECK(with_bias[4].indices.size() == 3);  // bias vector of layer 0 is one unit

  policy.excluded_layers = {0};
  CHECK(mask_units(policy, *layout).size() == 3 + 1);

  MixPolicy connect = MixPolicy::dropconnect(layout, 0.5);
  CHECK(mask_units(connect, *layout).size() == 12 + 6);
}

TEST_CASE("norm parameters are never masked") {
  auto layout = small_net();
  MixPolicy policy = MixPolicy::dropconnect(layout, 0.5);
  policy.scope = MaskScope::weights_and_biases;
  const MaskVector base = base_mask(policy, layout);
  const LayerDesc& d = layout->layer(0);
  for (std::size_t i = d.norm_offset; i < d.end(); ++i) CHECK(base.active[i] == 0);
  for (std::size_t i = d.weight_offset; i < d.norm_offset; ++i) CHECK(base.active[i] == 1);
}

TEST_CASE("sampled masks are deterministic per stream key") {
  auto layout = small_net();
  const MixPolicy policy = MixPolicy::dropconnect(layout, 0.5);
  const MaskVector a = sample_mask(policy, layout, StreamKey{7, 3});
  const MaskVector b = sample_mask(policy, layout, StreamKey{7, 3});
  const MaskVector c = sample_mask(policy, layout, StreamKey{7, 4});
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("neuron masks share one draw per column") {
  auto layout = small_net();
  const MixPolicy policy = MixPolicy::dropout(layout, 0.5);
  for (std::uint64_t step = 0; step < 20; ++step) {
    const MaskVector m = sample_mask(policy, layout, StreamKey{1, step});
    for (std::size_t l = 0; l < 2; ++l) {
      for (const auto& seg : layout->neuron_segments(l)) {
        for (std::size_t i : seg) CHECK(m.values[i] == m.values[seg[0]]);
      }
    }
  }
}

TEST_CASE("keep frequency matches 1 - p") {
  auto layout = ParamLayout::flat(1000);
  const MixPolicy policy = MixPolicy::dropconnect(layout, 0.3);
  double kept = 0.0;
  for (std::uint64_t step = 0; step < 50; ++step) {
    const MaskVector m = sample_mask(policy, layout, StreamKey{11, step});
    for (double v : m.values) kept += v;
  }
  // 50000 Bernoulli(0.7) draws: standard error about 0.002.
  CHECK(kept / 50000.0 == doctest::Approx(0.7).epsilon(0.015));
}

TEST_CASE("general mask laws have the requested moments") {
  auto layout = ParamLayout::flat(1000);
  MixPolicy policy = MixPolicy::dropconnect(layout, 0.0);
  policy.distribution = MaskDistribution::general(0.8, 0.09);
  double sum = 0.0, sq = 0.0, mn = 1.0;
  const int reps = 100;
  for (int step = 0; step < reps; ++step) {
    const MaskVector m = sample_mask(policy, layout, StreamKey{3, static_cast<std::uint64_t>(step)});
    for (double v : m.values) {
      sum += v;
      sq += v * v;
      mn = std::min(mn, v);
    }
  }
  const double n = 1000.0 * reps;
  const double mean = sum / n;
  CHECK(mean == doctest::Approx(0.8).epsilon(0.01));
  CHECK(sq / n - mean * mean == doctest::Approx(0.09).epsilon(0.03));
  CHECK(mn >= 0.0);
}

TEST_CASE("phi_mix interpolates on active entries and passes inactive ones") {
  auto layout = ParamLayout::create({LayerShape{1, 3, true, 2}});
  const ParamVector w(layout, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const ParamVector u(layout, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  MaskVector mask = MaskVector::from_values(layout, {0.0, 2.0, 1.0, 0.0, 0.0, 0.0});
  mask.active = {1, 1, 1, 0, 0, 0};
  const ParamVector phi = phi_mix(w, u, mask, 0.5);
  CHECK(phi[0] == 0.5);                      // dropped: anchor
  CHECK(phi[1] == 0.5 + 4.0 * (2.0 - 0.5));  // ratio 4
  CHECK(phi[2] == 0.5 + 2.0 * (3.0 - 0.5));
  CHECK(phi[3] == 4.0);
  CHECK(phi[4] == 5.0);
  CHECK(phi[5] == 6.0);

  const ParamVector g(layout, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
  const ParamVector back = phi_backward(mask, 0.5, g);
  CHECK(back[0] == 0.0);
  CHECK(back[1] == 4.0);
  CHECK(back[2] == 2.0);
  CHECK(back[3] == 1.0);
}

TEST_CASE("p = 0 leaves parameters bitwise unchanged") {
  auto layout = small_net();
  const ParamVector w = ramp(layout, -1.3);
  const ParamVector u = ramp(layout, 0.7);
  const MixPolicy policy = MixPolicy::mixout(u, 0.0);
  const MaskVector m = sample_mask(policy, layout, StreamKey{5, 0});
  const ParamVector phi = phi_mix(w, u, m, policy.distribution.mean());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(phi[i] == w[i]);
}

TEST_CASE("policies validate their anchor and exclusions") {
  auto layout = small_net();
  MixPolicy policy = MixPolicy::mixout(ParamVector(ParamLayout::flat(3)), 0.5);
  CHECK_THROWS_AS(policy.validate(*layout), DimensionError);
  policy = MixPolicy::dropout(layout, 0.5);
  policy.excluded_layers = {5};
  CHECK_THROWS_AS(policy.validate(*layout), ConfigError);
  CHECK(MixPolicy::dropout(layout, 0.1).describe() == "mixout(origin,0.1)");
}

TEST_CASE("decay touches weight entries only") {
  auto layout = small_net();
  const ParamVector w = ramp(layout, 1.0);
  const ParamVector u(layout);
  const ParamVector g = decay_grad(w, u, 0.1);
  double expected = 0.0;
  for (const LayerDesc& d : layout->layers()) {
    for (std::size_t i = d.weight_offset; i < d.end(); ++i) {
      if (i < d.bias_offset) {
        CHECK(g[i] == doctest::Approx(0.1 * w[i]));
        expected += w[i] * w[i];
      } else {
        CHECK(g[i] == 0.0);
      }
    }
  }
  CHECK(decay_penalty(w, u, 0.1) == doctest::Approx(0.05 * expected));
  CHECK_THROWS_AS(decay_penalty(w, u, -1.0), ConfigError);
}
