// Wall-clock cost of one optimizer step on a 784-300-100-10 network, batch 32.
#include <benchmark/benchmark.h>

#include <random>

#include "mixreg/optim.hpp"

using namespace mixreg;

namespace {

enum class Kind { none, dropout, mixout };

struct Fixture {
  NetworkSpec spec = NetworkSpec::mlp(784, {300, 100}, 10, true);
  ParamVector w = init_params(spec, 1);
  Batch batch;

  Fixture() {
    std::mt19937_64 engine(2);
    std::normal_distribution<double> normal;
    batch.inputs = Matrix(32, 784);
    for (Eigen::Index i = 0; i < batch.inputs.size(); ++i) batch.inputs.data()[i] = normal(engine);
    for (int i = 0; i < 32; ++i) batch.labels.push_back(i % 10);
  }

  MixPolicy policy(Kind kind, double p) const {
    MixPolicy out = kind == Kind::mixout ? MixPolicy::mixout(w, p, AnchorKind::pretrained_snapshot)
                                         : MixPolicy::dropout(w.layout_ptr(), kind == Kind::none ? 0.0 : p);
    out.excluded_layers = {0};
    return out;
  }
};

void BM_TrainStep(benchmark::State& state, Kind kind) {
  Fixture f;
  const MixPolicy policy = f.policy(kind, 0.1);
  ParamVector w = f.w;
  AdamState adam = AdamState::zeros(w.size());
  TrainConfig config;
  std::uint64_t step = 0;
  for (auto _ : state) {
    const StepMetrics m = train_step(f.spec, w, policy, f.batch, adam, config, 1e-5, StreamKey{3, step++});
    benchmark::DoNotOptimize(m.loss);
  }
}

void BM_SampleMask(benchmark::State& state) {
  Fixture f;
  const MixPolicy policy = f.policy(Kind::mixout, 0.1);
  std::uint64_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_mask(policy, f.w.layout_ptr(), StreamKey{4, step++}));
}

}  // namespace

BENCHMARK_CAPTURE(BM_TrainStep, none, Kind::none)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, dropout, Kind::dropout)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, mixout, Kind::mixout)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SampleMask)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
