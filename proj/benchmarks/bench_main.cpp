#include <benchmark/benchmark.h>

#include "edm/energy.hpp"
#include "edm/feature_space.hpp"
#include "edm/rng.hpp"
#include "edm/sampler.hpp"
#include "edm/schedule.hpp"
#include "edm/score_net.hpp"

namespace {

constexpr std::size_t kPixels = 256;

edm::ScoreNetwork make_net() {
  edm::ScoreNetworkConfig cfg;
  cfg.input_dim = kPixels;
  return edm::ScoreNetwork(cfg, edm::DiffusionSchedule());
}

edm::PromptPair make_prompts(edm::CounterRng& rng) {
  return {rng.normal_vector(32), rng.normal_vector(32)};
}

void BM_ScoreForward(benchmark::State& state) {
  const auto net = make_net();
  edm::CounterRng rng(1);
  const edm::Vec y = rng.normal_vector(kPixels);
  for (auto _ : state) benchmark::DoNotOptimize(net.score(y, 0.3));
}
BENCHMARK(BM_ScoreForward);

void BM_DsmLossGrad(benchmark::State& state) {
  const auto net = make_net();
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  edm::CounterRng rng(2);
  edm::Mat ys(kPixels, batch);
  edm::Mat eps(kPixels, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    ys.col(j) = rng.normal_vector(kPixels);
    eps.col(j) = rng.normal_vector(kPixels);
  }
  const edm::Vec times = edm::Vec::Constant(batch, 0.5);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(net.dsm_loss(ys, times, eps, &grad));
}
BENCHMARK(BM_DsmLossGrad)->Arg(8)->Arg(64);

void BM_EnergyGradient(benchmark::State& state) {
  edm::EncoderConfig ec;
  ec.input_dim = kPixels;
  const edm::FeatureEncoder encoder(ec);
  edm::CounterRng rng(3);
  const auto prompts = make_prompts(rng);
  const edm::Vec y = rng.normal_vector(kPixels);
  const edm::Vec x = rng.normal_vector(kPixels);
  const edm::EnergyConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(edm::evaluate_energy(y, x, encoder, prompts, cfg));
}
BENCHMARK(BM_EnergyGradient);

void BM_GuidedStep(benchmark::State& state) {
  const auto net = make_net();
  edm::EncoderConfig ec;
  ec.input_dim = kPixels;
  const edm::FeatureEncoder encoder(ec);
  edm::CounterRng rng(4);
  const auto prompts = make_prompts(rng);
  const edm::SamplerComponents comp{net.schedule(), edm::score_fn(net), &encoder, &prompts};
  edm::SamplerConfig cfg;
  cfg.stepper = state.range(0) == 0 ? edm::Stepper::vp_rule : edm::Stepper::euler_maruyama;
  const edm::Vec x0 = rng.normal_vector(kPixels);
  edm::Vec y = x0;
  for (auto _ : state) {
    y = edm::reverse_step(y, x0, 0.2, 0.004, comp, cfg, rng, false);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_GuidedStep)->Arg(0)->Arg(1);

void BM_Derain(benchmark::State& state) {
  const auto net = make_net();
  edm::EncoderConfig ec;
  ec.input_dim = kPixels;
  const edm::FeatureEncoder encoder(ec);
  edm::CounterRng rng(5);
  const auto prompts = make_prompts(rng);
  const edm::SamplerComponents comp{net.schedule(), edm::score_fn(net), &encoder, &prompts};
  const edm::SamplerConfig cfg;
  const edm::Vec x0 = rng.normal_vector(kPixels);
  for (auto _ : state) benchmark::DoNotOptimize(edm::sample(x0, comp, cfg));
}
BENCHMARK(BM_Derain)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
