#include <benchmark/benchmark.h>

#include "clickval/encoder.hpp"
#include "clickval/sim.hpp"

using namespace clickval;

namespace {

EncoderParams bench_params(int dims, CellKind cell) {
  EncoderConfig cfg;
  cfg.embed_dim = dims;
  cfg.hidden_dim = dims;
  cfg.cell = cell;
  return EncoderParams::init(cfg, default_sim_vocab(20));
}

void BM_EncodeStep(benchmark::State& state) {
  const auto params = bench_params(static_cast<int>(state.range(0)), CellKind::kGated);
  EncoderState s = initial_state(params);
  int a = 0;
  for (auto _ : state) {
    s = encode_step(params, s, a);
    a = (a + 1) % 18;
    benchmark::DoNotOptimize(s.h.data());
  }
}
BENCHMARK(BM_EncodeStep)->Arg(32)->Arg(64)->Arg(150);

void BM_SequenceBackward(benchmark::State& state) {
  const auto params = bench_params(static_cast<int>(state.range(0)), CellKind::kGated);
  std::vector<int> actions;
  for (int t = 0; t < 100; ++t) actions.push_back(t % 18);
  for (auto _ : state) {
    EncoderGradients grads = EncoderGradients::zeros_like(params);
    benchmark::DoNotOptimize(sequence_loss(params, actions, &grads).nll_sum);
  }
}
BENCHMARK(BM_SequenceBackward)->Arg(32)->Arg(150)->Unit(benchmark::kMicrosecond);

}  // namespace
