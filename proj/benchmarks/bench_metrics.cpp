#include <benchmark/benchmark.h>

#include "clickval/metrics.hpp"
#include "clickval/rng.hpp"
#include "clickval/sim.hpp"

using namespace clickval;

namespace {

void BM_PairScores(benchmark::State& state) {
  const ActionVocab vocab = default_sim_vocab(20);
  Rng rng(5);
  std::vector<Journey> journeys;
  std::vector<ProxyTrace> traces;
  for (int k = 0; k < state.range(0); ++k) {
    Journey j;
    j.customer_id = "c" + std::to_string(k);
    j.journey_id = j.customer_id + "#0";
    ProxyTrace t;
    t.journey_ref = j.journey_id;
    for (int i = 0; i < 50; ++i) {
      ClickEvent ev;
      ev.ts_ms = 1 + i;
      ev.action = static_cast<int>(rng.below(18));
      j.events.push_back(ev);
      t.y.push_back(rng.uniform());
    }
    journeys.push_back(std::move(j));
    traces.push_back(std::move(t));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(pair_scores(journeys, traces, vocab, true).size());
  }
}
BENCHMARK(BM_PairScores)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_SimulateJourneys(benchmark::State& state) {
  const SimConfig cfg = funnel_sim_config(20, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate(cfg, static_cast<int>(state.range(0))).size());
  }
}
BENCHMARK(BM_SimulateJourneys)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
