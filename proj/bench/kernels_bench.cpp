#include <benchmark/benchmark.h>

#include <vector>

#include "pat/kernels.hpp"
#include "pat/rng.hpp"

namespace k = pat::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  pat::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmShape s{n, n, n};
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::gemm(s, a, b, c);
    else
      k::serial::gemm(s, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const k::SoftmaxShape s{rows, 256, 1};
  const auto x = random_vector(rows * 256, 3);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::softmax(s, x, y);
    else
      k::serial::softmax(s, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t width = 512;
  const auto x = random_vector(rows * width, 4);
  const std::vector<double> gamma(width, 1.0), beta(width, 0.0);
  std::vector<double> y(x.size()), normalized(x.size()), inv_std(rows);
  const k::LayerNormCache cache{normalized, inv_std};
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::layer_norm(rows, width, 1e-5, x, gamma, beta, y, cache);
    else
      k::serial::layer_norm(rows, width, 1e-5, x, gamma, beta, y, cache);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_Conv1d(benchmark::State& state) {
  const auto seq = static_cast<std::size_t>(state.range(0));
  const k::Conv1dShape s{seq, 128, 128, 3, 2};
  const auto x = random_vector(seq * 128, 5), w = random_vector(3 * 128 * 128, 6);
  std::vector<double> y(s.out_len() * 128);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::parallel::conv1d(s, x, w, y);
    else
      k::serial::conv1d(s, x, w, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(64)->Arg(1024);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(64)->Arg(1024);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(64)->Arg(1024);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/parallel")->Arg(64)->Arg(1024);
BENCHMARK(BM_Conv1d<false>)->Name("conv1d/serial")->Arg(32)->Arg(256);
BENCHMARK(BM_Conv1d<true>)->Name("conv1d/parallel")->Arg(32)->Arg(256);

BENCHMARK_MAIN();
