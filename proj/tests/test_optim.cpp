#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mixreg/errors.hpp"
#include "mixreg/optim.hpp"

using namespace mixreg;

TEST_CASE("warm-up length snaps and clamps") {
  TrainConfig c;
  CHECK(warmup_steps(c, 10) == 1);
  CHECK(warmup_steps(c, 100) == 10);
  CHECK(warmup_steps(c, 1000) == 100);
  CHECK(warmup_steps(c, 15) == 2);  // ceil(1.5)
  CHECK(warmup_steps(c, 3) == 1);
  CHECK(warmup_steps(c, 2) == 1);
  c.warmup_fraction = 0.0;
  CHECK(warmup_steps(c, 50) == 1);
  CHECK_THROWS_AS(warmup_steps(c, 0), ConfigError);
}

TEST_CASE("schedule rises linearly then decays to zero") {
  TrainConfig c;
  c.base_lr = 2e-3;
  const std::size_t T = 100;
  CHECK(lr_at(c, 0, T) == 0.0);
  CHECK(lr_at(c, 5, T) == doctest::Approx(1e-3));
  CHECK(lr_at(c, 10, T) == 2e-3);
  CHECK(lr_at(c, 55, T) == doctest::Approx(1e-3));
  CHECK(lr_at(c, 100, T) == 0.0);
  double prev = lr_at(c, 10, T);
  for (std::size_t t = 11; t <= T; ++t) {
    const double cur = lr_at(c, static_cast<double>(t), T);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(lr_at(c, 101, T), ConfigError);
  CHECK_THROWS_AS(lr_at(c, -1, T), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.warmup_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("first Adam step moves by lr against the gradient sign") {
  AdamState s = AdamState::zeros(3);
  const ParamVector g = ParamVector::flat({0.5, -2.0, 1e-3});
  const ParamVector d = adam_step(s, g, 0.01, 0.9, 0.999, 1e-12);
  CHECK(d[0] == doctest::Approx(-0.01));
  CHECK(d[1] == doctest::Approx(0.01));
  CHECK(d[2] == doctest::Approx(-0.01));
  CHECK(s.t == 1);
}

TEST_CASE("Adam rejects non-finite gradients and size mismatches") {
  AdamState s = AdamState::zeros(2);
  std::vector<double> bad = {1.0, 0.0};
  ParamVector g = ParamVector::flat(bad);
  g[1] = std::nan("");
  CHECK_THROWS_AS(adam_step(s, g, 0.1, 0.9, 0.999, 1e-8), NumericError);
  CHECK_THROWS_AS(adam_step(s, ParamVector::flat({1.0}), 0.1, 0.9, 0.999, 1e-8), DimensionError);
}

TEST_CASE("Adam minimises a separable quadratic") {
  ParamVector w = ParamVector::flat({3.0, -2.0});
  AdamState s = AdamState::zeros(2);
  for (int k = 0; k < 3000; ++k) {
    ParamVector g = ParamVector::flat({2.0 * (w[0] - 1.0), 2.0 * (w[1] + 0.5)});
    const ParamVector d = adam_step(s, g, 0.01, 0.9, 0.999, 1e-8);
    w[0] += d[0];
    w[1] += d[1];
  }
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(w[1] == doctest::Approx(-0.5).epsilon(1e-3));
}

TEST_CASE("mixed gradient adds the decay term on weights") {
  auto layout = ParamLayout::create({LayerShape{1, 2, true, 0}});
  const ParamVector w(layout, {1.0, 2.0, 3.0});
  MixPolicy policy = MixPolicy::none(layout);
  policy.decay = DecayTerm{ParamVector(layout, {0.0, 1.0, 0.0}), 0.5};
  const Objective zero = [&](const ParamVector& v) { return LossGrad{0.0, ParamVector(v.layout_ptr())}; };
  const LossGrad lg = mixed_gradient(zero, w, policy, MaskVector::ones(layout));
  CHECK(lg.grad[0] == 0.5);
  CHECK(lg.grad[1] == 0.5);
  CHECK(lg.grad[2] == 0.0);
}

TEST_CASE("train_step with p = 0 is plain Adam and reports distance") {
  auto layout = ParamLayout::flat(3);
  ParamVector w = ParamVector::flat({0.3, -0.2, 1.1});
  ParamVector ref = w;
  const ParamVector start = w;
  const Objective obj = [](const ParamVector& v) {
    LossGrad lg{0.0, ParamVector(v.layout_ptr())};
    for (std::size_t i = 0; i < v.size(); ++i) {
      lg.loss += 0.5 * (v[i] - 1.0) * (v[i] - 1.0);
      lg.grad[i] = v[i] - 1.0;
    }
    return lg;
  };
  TrainConfig c;
  AdamState s1 = AdamState::zeros(3), s2 = AdamState::zeros(3);
  MixPolicy policy = MixPolicy::mixout(ParamVector::flat({5.0, 5.0, 5.0}), 0.0);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const StepMetrics m = train_step(obj, w, policy, s1, c, 0.05, StreamKey{1, k}, &start);
    const ParamVector d = adam_step(s2, obj(ref).grad, 0.05, c.beta1, c.beta2, c.adam_eps);
    for (std::size_t i = 0; i < 3; ++i) ref[i] += d[i];
    CHECK(std::memcmp(w.values().data(), ref.values().data(), 3 * sizeof(double)) == 0);
    CHECK(m.distance_to_reference == doctest::Approx(std::sqrt(deviation_norm_sq(w, start))));
  }
}
