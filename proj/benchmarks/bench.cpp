#include <random>

#include <benchmark/benchmark.h>

#include "topointerp/assignment.hpp"
#include "topointerp/datasets.hpp"
#include "topointerp/network.hpp"
#include "topointerp/persistence.hpp"
#include "topointerp/tensor_ops.hpp"
#include "topointerp/wasserstein.hpp"

using namespace topointerp;

namespace {

ScalarField mixture_field(int side) {
  return gen_gaussian_mixture(GridShape(side, side), 30, {}, 1).fields[12];
}

ScalarField noise_field(GridShape shape) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u;
  ScalarField f(shape);
  for (auto& v : f.values) v = u(rng);
  return f;
}

void BM_DiagramMixture(benchmark::State& state) {
  const auto f = mixture_field(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compute_diagram(f));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.size()));
}
BENCHMARK(BM_DiagramMixture)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_DiagramNoise3D(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const auto f = noise_field(GridShape(s, s, s));
  for (auto _ : state) benchmark::DoNotOptimize(compute_diagram(f));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.size()));
}
BENCHMARK(BM_DiagramNoise3D)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Assignment(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  CostMatrix c(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c(i, j) = u(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(assignment_solve(c, TieBreak::None));
}
BENCHMARK(BM_Assignment)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_Wasserstein(benchmark::State& state) {
  const auto a = prune(compute_diagram(noise_field(GridShape(48, 48))), 0.05);
  const auto b = prune(compute_diagram(noise_field(GridShape(47, 49))), 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein_distance(a, b));
  state.counters["points"] = static_cast<double>(a.size() + b.size());
}
BENCHMARK(BM_Wasserstein)->Unit(benchmark::kMillisecond);

nn::ArchConfig desk_arch() {
  nn::ArchConfig a;
  a.encoding_width = 64;
  a.base_resolution = 8;
  a.channels = {32, 16, 16, 8};
  a.hidden = 256;
  return a;
}

void BM_Forward(benchmark::State& state) {
  const auto arch = desk_arch();
  const auto p = nn::init_parameters(arch, 1);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(p, arch, 0.3));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto arch = desk_arch();
  const auto p = nn::init_parameters(arch, 1);
  auto grads = nn::zero_gradients(p);
  nn::ForwardTape tape;
  for (auto _ : state) {
    const auto out = nn::forward(p, arch, 0.3, &tape, nn::DropoutSpec{0.1, 1, 0, 0});
    benchmark::DoNotOptimize(nn::backward(p, tape, out.values, grads));
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_Conv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  nn::Volume in(c, {side, side, 1});
  for (auto& v : in.data) v = n(rng);
  std::vector<double> w(static_cast<std::size_t>(c * c * 9)), b(static_cast<std::size_t>(c));
  for (auto& v : w) v = n(rng);
  nn::Volume out;
  for (auto _ : state) {
    nn::conv3(in, w, b, c, 2, out);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c) * c * 9 * side * side);
}
BENCHMARK(BM_Conv)->Args({16, 32})->Args({8, 64})->Args({32, 16})->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int side = static_cast<int>(state.range(1));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  nn::Volume in(c, {side, side, 1}), g(c, {side, side, 1});
  for (auto& v : in.data) v = n(rng);
  for (auto& v : g.data) v = n(rng);
  std::vector<double> w(static_cast<std::size_t>(c * c * 9)), gw(w.size()), gb(static_cast<std::size_t>(c));
  for (auto& v : w) v = n(rng);
  nn::Volume gin;
  for (auto _ : state) {
    nn::conv3_backward(in, w, g, 2, gw, gb, &gin);
    benchmark::DoNotOptimize(gin.data.data());
  }
}
BENCHMARK(BM_ConvBackward)->Args({16, 32})->Args({8, 64})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
