#include "casim/experiment/train.hpp"
#include "casim/nn/layers.hpp"
#include "casim/nn/ops.hpp"
#include "casim/vq/vqvae.hpp"

#include <benchmark/benchmark.h>

using namespace casim;
using nn::Mat;

namespace {

Mat gaussian(int rows, int cols, std::uint64_t seed) {
  nn::Rng rng(seed);
  return nn::randn(rows, cols, 1.0, rng);
}

text::Vocabulary bench_vocab() {
  return text::Vocabulary({"a", "person", "walks", "forward", "then", "turns", "left", "and", "jumps", "waves"});
}

void BM_AttentionForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const nn::Var q(gaussian(n, 64, 1)), k(gaussian(n, 64, 2)), v(gaussian(n, 64, 3));
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nn::attention(q, k, v, 4).value().data());
  state.SetComplexityN(n);
}
BENCHMARK(BM_AttentionForward)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_AttentionBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const nn::Var q(gaussian(n, 64, 1), true), k(gaussian(n, 64, 2), true), v(gaussian(n, 64, 3), true);
  for (auto _ : state) {
    auto out = nn::sum(nn::attention(q, k, v, 4));
    out.backward();
  }
}
BENCHMARK(BM_AttentionBackward)->RangeMultiplier(2)->Range(16, 256);

void BM_DiffusionStep(benchmark::State& state) {
  io::ExperimentConfig c;
  c.diff.variant = state.range(0) == 0 ? "enc" : "dec";
  const auto vocab = bench_vocab();
  const diffusion::DiffusionModel model(experiment::text_config(c, vocab.size()), experiment::diffusion_config(c),
                                        text::Injection::casim, 0);
  const auto cond = model.condition(text::tokenize("a person walks forward then turns left", vocab));
  const Mat x = gaussian(120, data::kNumChannels, 4);
  nn::Rng rng(5);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model.p_sample_step(x, 25, cond, 2.5, rng).data());
  state.SetLabel(c.diff.variant);
}
BENCHMARK(BM_DiffusionStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VqTokenize(benchmark::State& state) {
  io::ExperimentConfig c;
  const vq::MotionVqvae model(experiment::vqvae_config(c), 0);
  const Mat frames = gaussian(120, data::kNumChannels, 6);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model.tokenize(frames).ids.data());
}
BENCHMARK(BM_VqTokenize)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
