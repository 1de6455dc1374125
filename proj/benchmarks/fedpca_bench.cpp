#include <benchmark/benchmark.h>

#include <random>

#include "fedpca/analysis.hpp"
#include "fedpca/federation.hpp"
#include "fedpca/metrics.hpp"
#include "fedpca/mlp.hpp"

using namespace fedpca;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

Labels cyclic_labels(std::size_t n, int classes) {
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i) % classes;
  return y;
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto params = nn::MlpParams::init(10, 16, 3, rng);
  const auto x = gaussian(batch, 10, 2);
  const auto y = cyclic_labels(batch, 3);
  for (auto _ : state) {
    const auto trace = nn::forward(params, x);
    benchmark::DoNotOptimize(nn::backward(params, trace, y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(200);

void BM_LocalEpoch(benchmark::State& state) {
  Rng rng(1);
  const auto params = nn::MlpParams::init(10, 16, 3, rng);
  const fed::ReliableDataset data{gaussian(200, 10, 3), cyclic_labels(200, 3), 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(fed::local_train(params, data, 1, 32, {}, 4));
}
BENCHMARK(BM_LocalEpoch);

void BM_ClientVector(benchmark::State& state) {
  Rng rng(1);
  const auto params = nn::MlpParams::init(10, 16, 3, rng);
  const auto x = gaussian(200, 10, 5);
  const auto y = cyclic_labels(200, 3);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::client_vector(params, x, y, 3, false, 6));
}
BENCHMARK(BM_ClientVector);

void BM_FitGmm3(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<analysis::LossDispersionPair> pairs(k);
  for (std::size_t i = 0; i < k; ++i) pairs[i] = {static_cast<double>(i % 3) + n(rng), 7.0 - (i % 3) * 0.5 + n(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(analysis::fit_gmm3(pairs, 8));
}
BENCHMARK(BM_FitGmm3)->Arg(20)->Arg(100);

void BM_MultiClassAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto params = nn::MlpParams::init(10, 16, 3, rng);
  const auto probs = nn::forward(params, gaussian(n, 10, 9)).probs;
  const auto y = cyclic_labels(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(eval::auc(probs, y, 3));
}
BENCHMARK(BM_MultiClassAuc)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
