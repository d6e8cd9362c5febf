#include <benchmark/benchmark.h>

#include "mcb/inference.hpp"
#include "mcb/learner.hpp"
#include "mcb/simulate.hpp"

namespace {

mcb::BanditConfig make_config(int d, int r) {
  mcb::BanditConfig config;
  config.d1 = d;
  config.d2 = d;
  config.r = r;
  config.k_arms = 2;
  config.horizon_T = 1000000;
  config.phase1_len_T0 = 500000;
  config.gamma = 1.0 / 3.0;
  config.epsilon_phase1 = 0.6;
  config.c2 = 10.0;
  config.eta_phase1 = 1e-4;
  config.seed = 1;
  return config;
}

mcb::LearnerState make_state(const mcb::BanditConfig& config) {
  mcb::Rng rng(1, 0);
  mcb::GroundTruth truth =
      mcb::generate_truth(config.d1, config.d2, config.r, 2, 2.0, rng);
  return mcb::init_from_matrices(truth.matrices, config.r, config);
}

void BM_SgdStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const mcb::BanditConfig config = make_config(d, 2);
  mcb::LearnerState learner = make_state(config);
  mcb::Rng rng(2, 0);
  for (auto _ : state) {
    const mcb::StepRecord rec = mcb::propose_round(
        learner, rng, [](int, int, int) { return 1.0; });
    mcb::sgd_step(learner, rec);
    benchmark::DoNotOptimize(learner.arms[0].u.data());
    if (learner.t + 1 >= config.horizon_T) learner.t = 0;
  }
}
BENCHMARK(BM_SgdStep)->Arg(60)->Arg(300)->Arg(1000);

void BM_RebalanceFast(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const mcb::BanditConfig config = make_config(d, 2);
  mcb::LearnerState learner = make_state(config);
  mcb::FactorPair pair = learner.arms[0];
  pair.u *= 1.7;
  pair.v *= 0.3;
  for (auto _ : state) {
    mcb::FactorPair out = mcb::rebalance_fast(pair);
    benchmark::DoNotOptimize(out.u.data());
  }
}
BENCHMARK(BM_RebalanceFast)->Arg(60)->Arg(300)->Arg(1000);

void BM_DebiasAccumulate(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  mcb::BanditConfig config = make_config(d, 2);
  config.phase1_len_T0 = 1;
  mcb::LearnerState learner = make_state(config);
  learner.t = 1;
  mcb::DebiasState db = mcb::make_debias_state(config);
  mcb::Rng rng(3, 0);
  for (auto _ : state) {
    const mcb::StepRecord rec = mcb::propose_round(
        learner, rng, [](int, int, int) { return 1.0; });
    mcb::debias_accumulate(db, learner, rec);
    learner.t = rec.t;
    benchmark::DoNotOptimize(db.ipw_sum[0].data());
    if (learner.t + 1 >= config.horizon_T) {
      learner.t = 1;
      db = mcb::make_debias_state(config);
    }
  }
}
BENCHMARK(BM_DebiasAccumulate)->Arg(60)->Arg(300);

}  // namespace

BENCHMARK_MAIN();
