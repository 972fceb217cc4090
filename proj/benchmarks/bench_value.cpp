#include <benchmark/benchmark.h>

#include "clickval/mrp.hpp"
#include "clickval/value.hpp"

using namespace clickval;

namespace {

void BM_TdUpdateMlp(benchmark::State& state) {
  ValueConfig cfg;
  cfg.estimator = EstimatorKind::kMlp;
  cfg.mlp_width = static_cast<int>(state.range(0));
  ValueParams params = ValueParams::init(cfg, 64, 20, 0);
  const RewardMap rewards = RewardMap::from_vector(std::vector<double>(20, 0.1));
  StateRep s{Eigen::VectorXd::Constant(64, 0.1), 3};
  StateRep next{Eigen::VectorXd::Constant(64, -0.1), 5};
  for (auto _ : state) {
    benchmark::DoNotOptimize(td_update(params, s, next, false, rewards).td_error);
  }
}
BENCHMARK(BM_TdUpdateMlp)->Arg(64)->Arg(128);

void BM_ExactValues(benchmark::State& state) {
  const TabularMRP mrp = random_mrp(static_cast<int>(state.range(0)), 0.9, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_values(mrp));
  }
}
BENCHMARK(BM_ExactValues)->Arg(5)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

}  // namespace
