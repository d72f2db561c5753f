// Microbenchmarks for the forward pass, Jacobian accumulation and path expansion.

#include <benchmark/benchmark.h>

#include "sunroll/jacobian.hpp"
#include "sunroll/random.hpp"
#include "sunroll/sure.hpp"

using namespace sunroll;

namespace {

UnrolledNetwork make_net(Index n, Index iterations, WeightMode mode) {
  const ProximalStack stack = ProximalStack::gaussian(mode, n, iterations, {n}, true, 1.0 / std::sqrt(n), 7);
  return UnrolledNetwork(stack, SensingOperator::identity(n), StepParams{});
}

void BM_Forward(benchmark::State& state) {
  const Index n = state.range(0);
  const UnrolledNetwork net = make_net(n, 5, WeightMode::changing);
  const Vector y = Rng(1).normal_vector(n);
  for (auto _ : state) benchmark::DoNotOptimize(net(y));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(256);

void BM_AccumulateJacobian(benchmark::State& state) {
  const Index n = state.range(0);
  const UnrolledNetwork net = make_net(n, 5, WeightMode::changing);
  const ForwardResult fwd = net.forward(Rng(1).normal_vector(n), {.record = true});
  for (auto _ : state) benchmark::DoNotOptimize(accumulate_jacobian(fwd.trace, net));
}
BENCHMARK(BM_AccumulateJacobian)->Arg(16)->Arg(64)->Arg(256);

void BM_PathExpansion(benchmark::State& state) {
  const Index t = state.range(0);
  const UnrolledNetwork net = make_net(32, t, WeightMode::shared);
  const ForwardResult fwd = net.forward(Rng(1).normal_vector(32), {.record = true});
  for (auto _ : state) benchmark::DoNotOptimize(path_expansion(fwd.trace, net.stack()));
}
BENCHMARK(BM_PathExpansion)->DenseRange(2, 10, 4);

void BM_MonteCarloDof(benchmark::State& state) {
  const UnrolledNetwork net = make_net(64, 5, WeightMode::changing);
  const Vector y = Rng(1).normal_vector(64);
  const VectorMap h = [&](const Vector& v) { return net(v); };
  for (auto _ : state)
    benchmark::DoNotOptimize(dof_monte_carlo(h, y, state.range(0), default_mc_delta(y), ProbeDistribution::rademacher, 3));
}
BENCHMARK(BM_MonteCarloDof)->Arg(16)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
