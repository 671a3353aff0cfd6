// Parallel kernels against their serial references. Thread count follows
// TSEMBED_THREADS or the OpenMP default.

#include "tsembed/dtw.hpp"
#include "tsembed/parallel.hpp"
#include "tsembed/sae.hpp"
#include "tsembed/svm.hpp"
#include "tsembed/tsne.hpp"

#include <benchmark/benchmark.h>

using namespace tsembed;

namespace {

std::vector<TimeSeries> series_set(std::size_t n, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::vector<TimeSeries> out(n);
  for (auto &s : out) {
    s.values.resize(length);
    for (auto &v : s.values)
      v = g(rng);
  }
  return out;
}

FeatureRows rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  FeatureRows x(n, std::vector<double>(d));
  for (auto &r : x)
    for (auto &v : r)
      v = g(rng);
  return x;
}

template <bool Parallel> void BM_DtwMatrix(benchmark::State &state) {
  const auto test = series_set(state.range(0), 60, 1);
  const auto train = series_set(state.range(0), 60, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? dtw_distance_matrix(test, train)
                                      : dtw_distance_matrix_reference(test, train));
}

template <bool Parallel> void BM_RbfKernel(benchmark::State &state) {
  const auto x = rows(state.range(0), 180, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? rbf_kernel_matrix(x, 0.01)
                                      : rbf_kernel_matrix_reference(x, 0.01));
}

template <bool Parallel> void BM_SquaredDistances(benchmark::State &state) {
  const auto x = rows(state.range(0), 180, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? squared_distances(x) : squared_distances_reference(x));
}

template <bool Parallel> void BM_TsneGradient(benchmark::State &state) {
  const auto x = rows(state.range(0), 10, 5);
  const auto p = perplexity_calibrate(squared_distances(x), 30.0).joint;
  Matrix y(x.size(), 2), grad;
  Rng rng(6);
  std::normal_distribution<double> g;
  for (auto &v : y.data)
    v = g(rng);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? tsne_gradient(p, y, 1.0, grad)
                                      : tsne_gradient_reference(p, y, 1.0, grad));
}

template <bool Parallel> void BM_BatchGradient(benchmark::State &state) {
  const auto model = make_sae(uniform_architecture(3, state.range(0)), 7);
  const auto data = series_set(32, 60, 8);
  std::vector<std::span<const double>> batch;
  for (auto &s : data)
    batch.push_back(s.values);
  const BatchSpec spec{Mode::train, 0.4, 9, 0, 1.0};
  auto grads = zeros_like(model);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? batch_gradient(model, batch, spec, grads)
                                      : batch_gradient_reference(model, batch, spec, grads));
}

template <bool Parallel> void BM_EmbedAll(benchmark::State &state) {
  const auto model = make_sae(uniform_architecture(3, 60), 10);
  const auto data = series_set(state.range(0), 128, 11);
  for (auto _ : state)
    benchmark::DoNotOptimize(Parallel ? embed_all(model, data) : embed_all_reference(model, data));
}

} // namespace

BENCHMARK(BM_DtwMatrix<false>)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DtwMatrix<true>)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfKernel<false>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RbfKernel<true>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SquaredDistances<false>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SquaredDistances<true>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TsneGradient<false>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TsneGradient<true>)->Arg(300)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<false>)->Arg(32)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradient<true>)->Arg(32)->Arg(60)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmbedAll<false>)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmbedAll<true>)->Arg(64)->Unit(benchmark::kMillisecond);

int main(int argc, char **argv) {
  apply_thread_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv))
    return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
