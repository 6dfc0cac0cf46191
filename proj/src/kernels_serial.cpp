// Reference kernels. Written for clarity; the OpenMP versions are checked
// against these.

#include <algorithm>
#include <cmath>

#include "gapnas/kernels.hpp"
#include "kernels_common.hpp"

namespace gapnas::kernels::serial {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const int m = args.m, n = args.n, k = args.k;
  if (!args.accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double av = args.trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        const double bv = args.trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        c[static_cast<std::size_t>(i) * n + j] += av * bv;
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<double> output) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) output[detail::out_index(g, n, co, y, x)] = detail::conv_output_at(g, input, weight, n, co, y, x);
}

// Scatter form: every output gradient is pushed back to the input pixels it read.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output, std::span<const double> weight,
                           std::span<double> grad_input) {
  const int oh = g.out_h(), ow = g.out_w();
  const int ipg = g.in_per_group(), opg = g.out_per_group();
  for (int n = 0; n < g.batch; ++n)
    for (int co = 0; co < g.out_channels; ++co) {
      const int grp = co / opg;
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const double go = grad_output[detail::out_index(g, n, co, y, x)];
          if (go == 0.0) continue;
          for (int cl = 0; cl < ipg; ++cl) {
            const int ci = grp * ipg + cl;
            for (int ky = 0; ky < g.kernel; ++ky) {
              const int iy = y * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int ix = x * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_input[detail::in_index(g, n, ci, iy, ix)] += go * weight[detail::w_index(g, co, cl, ky, kx)];
              }
            }
          }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> input, std::span<const double> grad_output,
                            std::span<double> grad_weight) {
  const int ipg = g.in_per_group();
  for (int co = 0; co < g.out_channels; ++co)
    for (int cl = 0; cl < ipg; ++cl)
      for (int ky = 0; ky < g.kernel; ++ky)
        for (int kx = 0; kx < g.kernel; ++kx)
          grad_weight[detail::w_index(g, co, cl, ky, kx)] += detail::weight_grad_at(g, input, grad_output, co, cl, ky, kx);
}

void upsample_nearest2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  for (int p = 0; p < planes; ++p) detail::nearest_plane(h, w, input, output, p);
}

void upsample_nearest2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                 std::span<double> grad_input) {
  for (int p = 0; p < planes; ++p) detail::nearest_plane_backward(h, w, grad_output, grad_input, p);
}

void upsample_bilinear2x(int planes, int h, int w, std::span<const double> input, std::span<double> output) {
  for (int p = 0; p < planes; ++p) detail::bilinear_plane(h, w, input, output, p);
}

void upsample_bilinear2x_backward(int planes, int h, int w, std::span<const double> grad_output,
                                  std::span<double> grad_input) {
  for (int p = 0; p < planes; ++p) detail::bilinear_plane_backward(h, w, grad_output, grad_input, p);
}

}  // namespace gapnas::kernels::serial
