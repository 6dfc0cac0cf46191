// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gapnas/kernels.hpp"

namespace k = gapnas::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

k::ConvGeometry geometry(int size) {
  k::ConvGeometry g;
  g.batch = 16;
  g.in_channels = 32;
  g.out_channels = 32;
  g.in_h = size;
  g.in_w = size;
  g.kernel = 3;
  g.padding = 1;
  return g;
}

template <bool kOmp>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vec(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_vec(static_cast<std::size_t>(n) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  const k::GemmArgs args{false, false, n, n, n, false};
  for (auto _ : state) {
    if constexpr (kOmp) {
      k::omp::gemm(args, a, b, c);
    } else {
      k::serial::gemm(args, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

template <bool kOmp>
void BM_ConvForward(benchmark::State& state) {
  const auto g = geometry(static_cast<int>(state.range(0)));
  const auto x = random_vec(g.input_size(), 3);
  const auto w = random_vec(g.weight_size(), 4);
  std::vector<double> y(g.output_size());
  for (auto _ : state) {
    if constexpr (kOmp) {
      k::omp::conv2d_forward(g, x, w, y);
    } else {
      k::serial::conv2d_forward(g, x, w, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

// The transposed convolution forward pass is the input gradient kernel.
template <bool kOmp>
void BM_ConvTranspose(benchmark::State& state) {
  auto g = geometry(static_cast<int>(state.range(0)));
  g.kernel = 2;
  g.stride = 2;
  g.padding = 0;
  g.in_h = g.in_w = 2 * static_cast<int>(state.range(0));
  const auto dy = random_vec(g.output_size(), 5);
  const auto w = random_vec(g.weight_size(), 6);
  std::vector<double> dx(g.input_size());
  for (auto _ : state) {
    std::fill(dx.begin(), dx.end(), 0.0);
    if constexpr (kOmp) {
      k::omp::conv2d_backward_input(g, dy, w, dx);
    } else {
      k::serial::conv2d_backward_input(g, dy, w, dx);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool kOmp>
void BM_Bilinear(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const int planes = 16 * 32;
  const auto x = random_vec(static_cast<std::size_t>(planes) * s * s, 7);
  std::vector<double> y(static_cast<std::size_t>(planes) * 4 * s * s);
  for (auto _ : state) {
    if constexpr (kOmp) {
      k::omp::upsample_bilinear2x(planes, s, s, x, y);
    } else {
      k::serial::upsample_bilinear2x(planes, s, s, x, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Arg(8)->Arg(16);
BENCHMARK(BM_ConvForward<true>)->Arg(8)->Arg(16);
BENCHMARK(BM_ConvTranspose<false>)->Arg(8)->Arg(16);
BENCHMARK(BM_ConvTranspose<true>)->Arg(8)->Arg(16);
BENCHMARK(BM_Bilinear<false>)->Arg(8)->Arg(16);
BENCHMARK(BM_Bilinear<true>)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
