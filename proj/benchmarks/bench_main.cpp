// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "gq/hessian.hpp"
#include "gq/lnq.hpp"
#include "gq/random.hpp"
#include "gq/verify.hpp"

namespace {

// One full CD pass set (K = 4 cycles) over a d x d layer at 2 bits.
void BM_CdEngine(benchmark::State& state, gq::CdEngine engine) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto inst = gq::verify::random_lnq_instance(d, 4, d, 42);
  for (auto _ : state) {
    auto states = inst.init;
    gq::run_cd(engine, inst.H, inst.W, states, 4, 32);
    benchmark::DoNotOptimize(states.data());
  }
  state.SetComplexityN(state.range(0));
}

void BM_LnqQuantize(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto inst = gq::verify::random_lnq_instance(d, 4, d, 42);
  gq::LnqConfig cfg;
  cfg.T = 2;
  cfg.K = 4;
  cfg.bits = 2;
  cfg.lazy_batch_size = 32;
  for (auto _ : state) {
    auto out = gq::lnq_quantize(inst.H, inst.W, cfg, inst.init);
    benchmark::DoNotOptimize(out.data());
  }
}

gq::LayerCalibration random_calibration(std::size_t n, std::size_t d_in, std::size_t d_out) {
  gq::Rng rng(7);
  gq::LayerCalibration c{gq::Matrix(n, d_in), gq::Matrix(n, d_out)};
  for (double& v : c.X.data()) v = rng.normal();
  for (double& v : c.gradZ.data()) v = rng.normal();
  return c;
}

void BM_PlainHessian(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto calib = random_calibration(1024, d, d);
  for (auto _ : state) benchmark::DoNotOptimize(gq::plain_hessian(calib, 1e-7));
}

void BM_GuidedHessians(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto g = static_cast<std::size_t>(state.range(1));
  const auto calib = random_calibration(1024, d, d);
  const auto partition = gq::ChannelPartition::consecutive(d, g);
  for (auto _ : state) benchmark::DoNotOptimize(gq::guided_hessians(calib, partition, 1.0, 1e-7));
}

}  // namespace

BENCHMARK_CAPTURE(BM_CdEngine, naive, gq::CdEngine::Naive)->RangeMultiplier(2)->Range(16, 64)->Complexity();
BENCHMARK_CAPTURE(BM_CdEngine, closed_form, gq::CdEngine::ClosedForm)->RangeMultiplier(2)->Range(16, 256)->Complexity();
BENCHMARK_CAPTURE(BM_CdEngine, precompute, gq::CdEngine::Precompute)->RangeMultiplier(2)->Range(16, 256)->Complexity();
BENCHMARK_CAPTURE(BM_CdEngine, lazy_batch, gq::CdEngine::LazyBatch)->RangeMultiplier(2)->Range(16, 256)->Complexity();
BENCHMARK(BM_LnqQuantize)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_PlainHessian)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GuidedHessians)->ArgsProduct({{64, 256}, {1, 4, 16}});
BENCHMARK_MAIN();
