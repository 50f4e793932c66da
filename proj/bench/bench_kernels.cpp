// Serial reference against the OpenMP path for the batch kernels.

#include "gae/env.hpp"
#include "gae/nn.hpp"
#include "gae/policy.hpp"
#include "gae/valuefit.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace gae;

namespace {

std::vector<Vec> random_states(long n, int dim, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<Vec> out(static_cast<std::size_t>(n), Vec(dim));
  for (auto& s : out) {
    for (auto& x : s) x = g(rng);
  }
  return out;
}

Exec mode(const benchmark::State& state) { return state.range(1) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_FisherVectorProduct(benchmark::State& state) {
  Rng rng(1);
  const policy::GaussianPolicy pi(nn::MlpSpec{4, {32}, 1});
  const Vec theta = pi.init_params(rng);
  const auto states = random_states(state.range(0), 4, rng);
  const Vec v = Vec::Ones(pi.param_count());
  for (auto _ : state) benchmark::DoNotOptimize(policy::fisher_vector_product(pi, theta, states, v, 1e-5, mode(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GaussNewtonApply(benchmark::State& state) {
  Rng rng(2);
  const nn::MlpSpec spec{4, {20}, 1};
  const Vec params = nn::init_params(spec, rng);
  const auto states = random_states(state.range(0), 4, rng);
  const valuefit::GaussNewton gn(spec, params, states, mode(state));
  const Vec v = Vec::Ones(spec.param_count());
  for (auto _ : state) benchmark::DoNotOptimize(gn.apply(v, 1e-5));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RolloutBatch(benchmark::State& state) {
  Rng rng(3);
  const env::CartPole proto;
  const policy::GaussianPolicy pi(nn::MlpSpec{4, {}, 1});
  const Vec theta = pi.init_params(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(env::rollout_batch(proto, pi, theta, static_cast<int>(state.range(0)), 1000, 7, mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_FisherVectorProduct)->ArgsProduct({{1000, 20000}, {0, 1}})->ArgNames({"states", "parallel"});
BENCHMARK(BM_GaussNewtonApply)->ArgsProduct({{1000, 20000}, {0, 1}})->ArgNames({"states", "parallel"});
BENCHMARK(BM_RolloutBatch)->ArgsProduct({{20}, {0, 1}})->ArgNames({"trajectories", "parallel"});

BENCHMARK_MAIN();
