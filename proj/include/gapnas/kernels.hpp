#pragma once

// Data-parallel inner loops used by the tensor primitives.
//
// Every kernel exists twice: `serial::` is the straightforward reference that
// the tests compare against, `omp::` distributes independent output elements
// over OpenMP threads. Each output element of an `omp::` kernel is produced by
// a single thread with a fixed summation order, so results do not depend on
// the thread count. The dispatching functions at namespace scope route to the
// backend selected with set_backend().

#include <span>

namespace gapnas::kernels {

enum class Backend { kSerial, kOpenMP };

void set_backend(Backend backend);
Backend backend();

/// Shape bookkeeping for a (grouped) 2-D convolution in NCHW layout with a
/// weight of shape [out_channels, in_channels / groups, kernel, kernel].
struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  int out_h() const { return (in_h + 2 * padding - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * padding - kernel) / stride + 1; }
  int in_per_group() const { return in_channels / groups; }
  int out_per_group() const { return out_channels / groups; }
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t weight_size() const;
};

// c (m x n) = op(a) * op(b), op(a) is m x k. Accumulates into c when
// `accumulate` is set, overwrites otherwise.
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  int m = 0;
  int n = 0;
  int k = 0;
  bool accumulate = false;
};

#define GAPNAS_KERNEL_DECLS                                                                          \
  void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,             \
            std::span<double> c);                                                                   \
  void conv2d_forward(const ConvGeometry& g, std::span<const double> input,                         \
                      std::span<const double> weight, std::span<double> output);                    \
  /* grad_input += conv^T(grad_output) */                                                            \
  void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,            \
                             std::span<const double> weight, std::span<double> grad_input);         \
  /* grad_weight += correlation of input with grad_output */                                         \
  void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input,                 \
                              std::span<const double> grad_output, std::span<double> grad_weight);  \
  void upsample_nearest2x(int planes, int h, int w, std::span<const double> input,                  \
                          std::span<double> output);                                                \
  void upsample_nearest2x_backward(int planes, int h, int w, std::span<const double> grad_output,   \
                                   std::span<double> grad_input);                                   \
  void upsample_bilinear2x(int planes, int h, int w, std::span<const double> input,                 \
                           std::span<double> output);                                               \
  void upsample_bilinear2x_backward(int planes, int h, int w, std::span<const double> grad_output,  \
                                    std::span<double> grad_input);

namespace serial {
GAPNAS_KERNEL_DECLS
}  // namespace serial

namespace omp {
GAPNAS_KERNEL_DECLS
}  // namespace omp

GAPNAS_KERNEL_DECLS

#undef GAPNAS_KERNEL_DECLS

}  // namespace gapnas::kernels
