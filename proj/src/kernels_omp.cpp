#include <algorithm>
#include <atomic>
#include <cstdint>

#include <omp.h>

#include "gapnas/kernels.hpp"
#include "kernels_common.hpp"

namespace gapnas::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::kOpenMP};

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

std::size_t ConvGeometry::input_size() const {
  return static_cast<std::size_t>(batch) * in_channels * in_h * in_w;
}
std::size_t ConvGeometry::output_size() const {
  return static_cast<std::size_t>(batch) * out_channels * out_h() * out_w();
}
std::size_t ConvGeometry::weight_size() const {
  return static_cast<std::size_t>(out_channels) * in_per_group() * kernel * kernel;
}

namespace omp {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const int m = args.m, n = args.n, k = args.k;
  const bool par = static_cast<std::int64_t>(m) * n * k > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    double* row = c.data() + static_cast<std::size_t>(i) * n;
    if (!args.accumulate) std::fill(row, row + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double av = args.trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        const double bv = args.trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        row[j] += av * bv;
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  const int oh = g.out_h(), ow = g.out_w();
  const std::int64_t total = static_cast<std::int64_t>(g.batch) * g.out_channels * oh * ow;
  const bool par = total * g.in_per_group() * g.kernel * g.kernel > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int x = static_cast<int>(idx % ow);
    const int y = static_cast<int>((idx / ow) % oh);
    const int co = static_cast<int>((idx / (static_cast<std::int64_t>(ow) * oh)) % g.out_channels);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(ow) * oh * g.out_channels));
    output[static_cast<std::size_t>(idx)] = detail::conv_output_at(g, input, weight, n, co, y, x);
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input) {
  const std::int64_t total = static_cast<std::int64_t>(g.input_size());
  const bool par = total * g.out_per_group() * g.kernel * g.kernel > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int x = static_cast<int>(idx % g.in_w);
    const int y = static_cast<int>((idx / g.in_w) % g.in_h);
    const int ci = static_cast<int>((idx / (static_cast<std::int64_t>(g.in_w) * g.in_h)) % g.in_channels);
    const int n = static_cast<int>(idx / (static_cast<std::int64_t>(g.in_w) * g.in_h * g.in_channels));
    grad_input[static_cast<std::size_t>(idx)] += detail::input_grad_at(g, grad_output, weight, n, ci, y, x);
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight) {
  const std::int64_t total = static_cast<std::int64_t>(g.weight_size());
  const bool par = static_cast<std::int64_t>(g.output_size()) * g.in_per_group() * g.kernel * g.kernel > kParallelWork;
  const int k = g.kernel, ipg = g.in_per_group();
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const int kx = static_cast<int>(idx % k);
    const int ky = static_cast<int>((idx / k) % k);
    const int cl = static_cast<int>((idx / (static_cast<std::int64_t>(k) * k)) % ipg);
    const int co = static_cast<int>(idx / (static_cast<std::int64_t>(k) * k * ipg));
    grad_weight[static_cast<std::size_t>(idx)] += detail::weight_grad_at(g, input, grad_output, co, cl, ky, kx);
  }
}

void upsample_nearest2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  const bool par = static_cast<std::int64_t>(planes) * h * w * 4 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (int p = 0; p < planes; ++p) detail::nearest_plane(h, w, input, output, p);
}

void upsample_nearest2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                 std::span<double> grad_input) {
  const bool par = static_cast<std::int64_t>(planes) * h * w * 4 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (int p = 0; p < planes; ++p) detail::nearest_plane_backward(h, w, grad_output, grad_input, p);
}

void upsample_bilinear2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  const bool par = static_cast<std::int64_t>(planes) * h * w * 16 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (int p = 0; p < planes; ++p) detail::bilinear_plane(h, w, input, output, p);
}

void upsample_bilinear2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                  std::span<double> grad_input) {
  const bool par = static_cast<std::int64_t>(planes) * h * w * 16 > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (int p = 0; p < planes; ++p) detail::bilinear_plane_backward(h, w, grad_output, grad_input, p);
}

}  // namespace omp

#define GAPNAS_DISPATCH(name, ...)                                        \
  (backend() == Backend::kOpenMP ? omp::name(__VA_ARGS__) : serial::name(__VA_ARGS__))

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  GAPNAS_DISPATCH(gemm, args, a, b, c);
}
void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  GAPNAS_DISPATCH(conv2d_forward, g, input, weight, output);
}
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input) {
  GAPNAS_DISPATCH(conv2d_backward_input, g, grad_output, weight, grad_input);
}
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight) {
  GAPNAS_DISPATCH(conv2d_backward_weight, g, input, grad_output, grad_weight);
}
void upsample_nearest2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  GAPNAS_DISPATCH(upsample_nearest2x, planes, h, w, input, output);
}
void upsample_nearest2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                 std::span<double> grad_input) {
  GAPNAS_DISPATCH(upsample_nearest2x_backward, planes, h, w, grad_output, grad_input);
}
void upsample_bilinear2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  GAPNAS_DISPATCH(upsample_bilinear2x, planes, h, w, input, output);
}
void upsample_bilinear2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                  std::span<double> grad_input) {
  GAPNAS_DISPATCH(upsample_bilinear2x_backward, planes, h, w, grad_output, grad_input);
}

#undef GAPNAS_DISPATCH

}  // namespace gapnas::kernels
