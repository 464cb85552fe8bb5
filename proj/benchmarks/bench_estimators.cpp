#include <benchmark/benchmark.h>

#include "jsb/config.hpp"
#include "jsb/gradient.hpp"
#include "jsb/oracle.hpp"

namespace {

jsb::RewardBatch batch_for(benchmark::State& state) {
  static const auto dist = jsb::default_distribution();
  static const auto policy = jsb::TabularPolicy::from_distribution(dist);
  return jsb::draw_policy_batch(policy, dist, static_cast<std::size_t>(state.range(0)),
                                static_cast<std::size_t>(state.range(1)), 1, 0);
}

void BM_Baseline(benchmark::State& state, jsb::Estimator e) {
  const auto batch = batch_for(state);
  for (auto _ : state) benchmark::DoNotOptimize(jsb::compute_baseline(e, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_PolicyGradient(benchmark::State& state) {
  const auto dist = jsb::default_distribution();
  const auto policy = jsb::TabularPolicy::from_distribution(dist);
  const auto batch = jsb::draw_policy_batch(policy, dist, state.range(0), state.range(1), 1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(jsb::estimator_gradient(policy, batch, jsb::Estimator::js2, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_PopulationEnumeration(benchmark::State& state) {
  const auto d = jsb::PromptDistribution::uniform(
      {jsb::PromptModel::bernoulli(0, 0.2), jsb::PromptModel::bernoulli(1, 0.5), jsb::PromptModel::bernoulli(2, 0.9)});
  const std::array<double, 3> lambdas{0.0, 0.5, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(jsb::enumerate_loo_shrinkage_mse(d, 3, state.range(0), lambdas));
}

void BM_Microbatch(benchmark::State& state) {
  std::vector<jsb::GradientSample> s(static_cast<std::size_t>(state.range(0)));
  double x = 0.1;
  for (auto& g : s) {
    g.vector.resize(90);
    for (double& v : g.vector) v = (x = x * 3.7 - static_cast<int>(x * 3.7));
  }
  for (auto _ : state) benchmark::DoNotOptimize(jsb::microbatch_trace_variance(s));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Baseline, rloo, jsb::Estimator::rloo)->Args({64, 2})->Args({64, 8})->Args({256, 16});
BENCHMARK_CAPTURE(BM_Baseline, bloo, jsb::Estimator::bloo)->Args({64, 2})->Args({64, 8})->Args({256, 16});
BENCHMARK_CAPTURE(BM_Baseline, js2, jsb::Estimator::js2)->Args({64, 2})->Args({64, 8})->Args({256, 16});
BENCHMARK_CAPTURE(BM_Baseline, grpo, jsb::Estimator::grpo)->Args({64, 2})->Args({64, 8})->Args({256, 16});
BENCHMARK(BM_PolicyGradient)->Args({16, 2})->Args({64, 8});
BENCHMARK(BM_PopulationEnumeration)->Arg(2)->Arg(3);
BENCHMARK(BM_Microbatch)->Arg(8)->Arg(64);
BENCHMARK_MAIN();
